//! Time-indexed tables of responses and covariates with a missingness mask.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-oriented numeric table. Row order is time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
}

/// Outcome of case deletion on a set of referenced variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseDeletion {
    pub retained: usize,
    pub dropped: usize,
    pub dropped_fraction: f64,
}

/// Calendar used to derive year/month/day/season columns from the row index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    pub days_per_year: usize,
    pub days_per_month: usize,
    /// Months `1..=season_one_months` form season 1, the rest season 2.
    pub season_one_months: usize,
}

impl Default for Calendar {
    fn default() -> Self {
        Calendar {
            days_per_year: 300,
            days_per_month: 25,
            season_one_months: 6,
        }
    }
}

impl Calendar {
    pub fn months_per_year(&self) -> usize {
        self.days_per_year / self.days_per_month
    }

    /// (year, month, day-of-month, season), all 1-based, for a 0-based row index.
    pub fn index(&self, row: usize) -> (usize, usize, usize, usize) {
        let year = row / self.days_per_year + 1;
        let day_of_year = row % self.days_per_year;
        let month = day_of_year / self.days_per_month + 1;
        let day = day_of_year % self.days_per_month + 1;
        let season = if month <= self.season_one_months { 1 } else { 2 };
        (year, month, day, season)
    }
}

impl Series {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from named columns. NaN entries are marked missing.
    pub fn from_columns<S: Into<String>>(cols: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let mut s = Series::new();
        for (name, values) in cols {
            s.set_column(name, values)?;
        }
        Ok(s)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    /// Inserts or replaces a column. NaN values are recorded as missing.
    pub fn set_column<S: Into<String>>(&mut self, name: S, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if !self.columns.is_empty() && values.len() != self.n_rows() {
            return Err(Error::Argument(format!(
                "column `{name}` has {} rows, table has {}",
                values.len(),
                self.n_rows()
            )));
        }
        let mask: Vec<bool> = values.iter().map(|v| v.is_nan()).collect();
        match self.names.iter().position(|n| *n == name) {
            Some(i) => {
                self.columns[i] = values;
                self.missing[i] = mask;
            }
            None => {
                self.names.push(name);
                self.columns.push(values);
                self.missing.push(mask);
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.position(name)?])
    }

    pub fn missing_mask(&self, name: &str) -> Result<&[bool]> {
        Ok(&self.missing[self.position(name)?])
    }

    pub fn value(&self, name: &str, row: usize) -> Result<f64> {
        Ok(self.column(name)?[row])
    }

    /// Rows with every listed variable present.
    pub fn complete_rows(&self, vars: &[&str]) -> Result<Vec<usize>> {
        let masks: Vec<&[bool]> = vars.iter().map(|v| self.missing_mask(v)).collect::<Result<_>>()?;
        Ok((0..self.n_rows()).filter(|&r| masks.iter().all(|m| !m[r])).collect())
    }

    /// Case analysis: drops only the rows missing one of `vars`.
    pub fn complete_cases(&self, vars: &[&str]) -> Result<(Series, CaseDeletion)> {
        let keep = self.complete_rows(vars)?;
        let n = self.n_rows();
        let dropped = n - keep.len();
        let info = CaseDeletion {
            retained: keep.len(),
            dropped,
            dropped_fraction: if n == 0 { 0.0 } else { dropped as f64 / n as f64 },
        };
        Ok((self.select_rows(&keep), info))
    }

    /// New table holding `rows` in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Series {
        Series {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            missing: self.missing.iter().map(|m| rows.iter().map(|&r| m[r]).collect()).collect(),
        }
    }

    /// Fraction of rows with at least one missing value among `vars`.
    pub fn missing_fraction(&self, vars: &[&str]) -> Result<f64> {
        let n = self.n_rows();
        if n == 0 {
            return Ok(0.0);
        }
        Ok(1.0 - self.complete_rows(vars)?.len() as f64 / n as f64)
    }

    /// Adds year/month/day/season columns derived from row position when absent.
    pub fn with_calendar(mut self, cal: &Calendar) -> Result<Series> {
        let n = self.n_rows();
        let idx: Vec<_> = (0..n).map(|r| cal.index(r)).collect();
        let cols: [(&str, Box<dyn Fn(&(usize, usize, usize, usize)) -> usize>); 4] = [
            ("year", Box::new(|t| t.0)),
            ("month", Box::new(|t| t.1)),
            ("day", Box::new(|t| t.2)),
            ("season", Box::new(|t| t.3)),
        ];
        for (name, get) in cols {
            if !self.has_column(name) {
                self.set_column(name, idx.iter().map(|t| get(t) as f64).collect())?;
            }
        }
        Ok(self)
    }

    /// Parses CSV with a header row. Empty fields and `NA` are missing.
    /// Lines starting with `#` are metadata and skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Series> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(Error::Ingest {
                line: 0,
                message: "empty file".into(),
            });
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            for (c, f) in cols.iter_mut().zip(rec.iter()) {
                let v = if f.is_empty() || f.eq_ignore_ascii_case("na") {
                    f64::NAN
                } else {
                    f.parse::<f64>().map_err(|_| Error::Ingest {
                        line,
                        message: format!("cannot parse `{f}` as a number"),
                    })?
                };
                c.push(v);
            }
        }
        Series::from_columns(names.into_iter().zip(cols).collect())
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Series> {
        Series::read_csv(std::fs::File::open(path)?)
    }

    /// Writes CSV; missing values are written as `NA`. Each metadata line is
    /// emitted first, prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[String]) -> Result<()> {
        for m in metadata {
            writeln!(w, "# {m}")?;
        }
        writeln!(w, "{}", self.names.join(","))?;
        for r in 0..self.n_rows() {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| if c[r].is_nan() { "NA".to_string() } else { format_float(c[r]) })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shortest round-tripping representation.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Reads `# key: value` metadata lines from the head of a CSV file.
pub fn read_metadata<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.trim().split_once(':') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn na_sets_mask() {
        let csv = "y,V4\n1.0,NA\n2.0,3.5\n3.0,\n";
        let s = Series::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.missing_mask("V4").unwrap(), &[true, false, true]);
        assert!((s.missing_fraction(&["V4"]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let (cc, info) = s.complete_cases(&["V4"]).unwrap();
        assert_eq!(cc.n_rows(), 1);
        assert_eq!(info.dropped, 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(Series::read_csv("".as_bytes()), Err(Error::Ingest { .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "a,b\n1,2\n3,x\n";
        match Series::read_csv(csv.as_bytes()) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calendar_columns() {
        let cal = Calendar::default();
        assert_eq!(cal.index(0), (1, 1, 1, 1));
        assert_eq!(cal.index(149), (1, 6, 25, 1));
        assert_eq!(cal.index(150), (1, 7, 1, 2));
        assert_eq!(cal.index(300), (2, 1, 1, 1));
        let s = Series::from_columns(vec![("y", vec![0.0; 600])]).unwrap().with_calendar(&cal).unwrap();
        let seasons = s.column("season").unwrap();
        assert_eq!(seasons.iter().filter(|&&v| v == 1.0).count(), 300);
    }

    #[test]
    fn csv_round_trip_with_metadata() {
        let s = Series::from_columns(vec![("a", vec![1.5, f64::NAN]), ("b", vec![0.1, 2.0])]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["truth: {\"k\":1}".to_string()]).unwrap();
        let back = Series::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.column("b").unwrap(), &[0.1, 2.0]);
        assert!(back.missing_mask("a").unwrap()[1]);
        let meta = read_metadata(buf.as_slice()).unwrap();
        assert_eq!(meta, vec![("truth".to_string(), "{\"k\":1}".to_string())]);
    }
}
