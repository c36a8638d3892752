use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value lies outside the support or domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("not enough data: need at least {needed}, got {got} ({context})")]
    InsufficientData {
        needed: usize,
        got: usize,
        context: String,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A formula references a column that the data does not contain.
    #[error("schema error: unknown variable `{0}`")]
    Schema(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("formula parse error: {0}")]
    Parse(String),

    /// An optimizer or root finder failed to converge.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ingest error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Ingest {
            line,
            message: e.to_string(),
        }
    }
}
