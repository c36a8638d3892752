//! Formula language for basis expansions of one distribution parameter:
//!
//! ```text
//! param ~ 1 [+ lin(VAR)] [+ ind(VAR==LEVEL)] [+ crs(VAR, B=INT)]*
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Linear { var: String },
    Indicator { var: String, level: f64 },
    Spline { var: String, dim: usize },
}

impl Term {
    pub fn variable(&self) -> Option<&str> {
        match self {
            Term::Intercept => None,
            Term::Linear { var } | Term::Indicator { var, .. } | Term::Spline { var, .. } => Some(var),
        }
    }

    /// Number of design columns the term contributes.
    pub fn dim(&self) -> usize {
        match self {
            Term::Spline { dim, .. } => *dim,
            _ => 1,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Linear { var } => write!(f, "lin({var})"),
            Term::Indicator { var, level } => write!(f, "ind({var}=={level})"),
            Term::Spline { var, dim } => write!(f, "crs({var}, B={dim})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub terms: Vec<Term>,
}

impl Formula {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let f = Formula { terms };
        f.validate()?;
        Ok(f)
    }

    pub fn intercept() -> Self {
        Formula {
            terms: vec![Term::Intercept],
        }
    }

    /// Parses the right-hand side, e.g. `1 + ind(season==1) + crs(V3, B=4)`.
    pub fn parse(rhs: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in rhs.split('+') {
            let t = raw.trim();
            if t.is_empty() {
                return Err(Error::Parse(format!("empty term in `{rhs}`")));
            }
            terms.push(parse_term(t)?);
        }
        Formula::new(terms)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Parse("formula has no terms".into()));
        }
        if self.terms.iter().filter(|t| **t == Term::Intercept).count() > 1 {
            return Err(Error::Parse("at most one intercept is allowed".into()));
        }
        for t in &self.terms {
            if let Term::Spline { dim, var } = t {
                if *dim < 3 {
                    return Err(Error::Parse(format!("crs({var}) needs B >= 3, got {dim}")));
                }
            }
        }
        Ok(())
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    pub fn is_intercept_only(&self) -> bool {
        self.terms == [Term::Intercept]
    }

    /// Distinct referenced variables in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in self.terms.iter().filter_map(Term::variable) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    pub fn n_columns(&self) -> usize {
        self.terms.iter().map(Term::dim).sum()
    }

    /// Copy with one more term appended.
    pub fn with_term(&self, t: Term) -> Formula {
        let mut terms = self.terms.clone();
        terms.push(t);
        Formula { terms }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Formula::parse(s)
    }
}

fn inner<'a>(t: &'a str, head: &str) -> Option<&'a str> {
    t.strip_prefix(head)?.trim_start().strip_prefix('(')?.strip_suffix(')')
}

fn check_var(v: &str, term: &str) -> Result<String> {
    let v = v.trim();
    if v.is_empty() || !v.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
        return Err(Error::Parse(format!("bad variable name in `{term}`")));
    }
    Ok(v.to_string())
}

fn parse_term(t: &str) -> Result<Term> {
    if t == "1" {
        return Ok(Term::Intercept);
    }
    if let Some(body) = inner(t, "lin") {
        return Ok(Term::Linear { var: check_var(body, t)? });
    }
    if let Some(body) = inner(t, "ind") {
        let (var, level) = body
            .split_once("==")
            .ok_or_else(|| Error::Parse(format!("expected ind(VAR==LEVEL), got `{t}`")))?;
        let level: f64 = level
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad level in `{t}`")))?;
        return Ok(Term::Indicator {
            var: check_var(var, t)?,
            level,
        });
    }
    if let Some(body) = inner(t, "crs") {
        let (var, b) = body
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected crs(VAR, B=INT), got `{t}`")))?;
        let b = b.trim();
        let dim = b
            .strip_prefix('B')
            .map(str::trim_start)
            .and_then(|r| r.strip_prefix('='))
            .and_then(|r| r.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("expected B=INT in `{t}`")))?;
        return Ok(Term::Spline {
            var: check_var(var, t)?,
            dim,
        });
    }
    Err(Error::Parse(format!("unknown term `{t}`")))
}

/// Which distribution parameter a formula line describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Threshold,
    Scale,
    Shape,
}

/// Parses `param ~ rhs`. The shape line accepts only `1`.
pub fn parse_line(line: &str) -> Result<(Parameter, Formula)> {
    let (lhs, rhs) = line
        .split_once('~')
        .ok_or_else(|| Error::Parse(format!("expected `param ~ terms`, got `{line}`")))?;
    let param = match lhs.trim() {
        "threshold" => Parameter::Threshold,
        "scale" => Parameter::Scale,
        "shape" => Parameter::Shape,
        other => return Err(Error::Parse(format!("unknown parameter `{other}`"))),
    };
    let f = Formula::parse(rhs)?;
    if param == Parameter::Shape && !f.is_intercept_only() {
        return Err(Error::Parse("shape accepts only `1`".into()));
    }
    Ok((param, f))
}

/// Formulas for threshold, scale and shape, one line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaSet {
    pub threshold: Option<Formula>,
    pub scale: Formula,
    pub shape: Formula,
}

impl FormulaSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = FormulaSet {
            threshold: None,
            scale: Formula::intercept(),
            shape: Formula::intercept(),
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match parse_line(line)? {
                (Parameter::Threshold, f) => set.threshold = Some(f),
                (Parameter::Scale, f) => set.scale = f,
                (Parameter::Shape, f) => set.shape = f,
            }
        }
        Ok(set)
    }
}
