//! Design matrices built from a [`Formula`] and a [`Series`].

use serde::{Deserialize, Serialize};

use super::formula::{Formula, Term};
use super::spline::CubicRegressionSpline;
use crate::error::{Error, Result};
use crate::series::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermBasis {
    Intercept,
    Linear { var: String },
    Indicator { var: String, level: f64 },
    Spline { var: String, spline: CubicRegressionSpline },
}

impl TermBasis {
    pub fn dim(&self) -> usize {
        match self {
            TermBasis::Spline { spline, .. } => spline.dim(),
            _ => 1,
        }
    }
}

/// Basis functions fixed on training data; evaluates rows of any table with
/// the same variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    formula: Formula,
    terms: Vec<TermBasis>,
}

/// Columns `start..start+dim` of a spline term and its roughness penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBlock {
    pub term: usize,
    pub start: usize,
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub penalty: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
    /// Number of rows with at least one clamped spline evaluation.
    pub clamped_rows: usize,
}

impl DesignMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols + c]
    }

    /// `X β` for every row.
    pub fn mul(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Xᵀ X / n` restricted to columns `start..start+dim` (row-major).
    pub fn gram_block(&self, start: usize, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; dim * dim];
        for r in 0..self.n_rows {
            let row = &self.row(r)[start..start + dim];
            for i in 0..dim {
                for j in 0..dim {
                    g[i * dim + j] += row[i] * row[j];
                }
            }
        }
        let n = self.n_rows.max(1) as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        DesignMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            values,
            clamped_rows: 0,
        }
    }
}

fn column_checked<'a>(data: &'a Series, var: &str) -> Result<&'a [f64]> {
    data.column(var)
}

impl DesignSpec {
    /// Places spline knots on the training covariates.
    pub fn fit(formula: &Formula, data: &Series) -> Result<Self> {
        formula.validate()?;
        let mut terms = Vec::with_capacity(formula.terms.len());
        for t in &formula.terms {
            let basis = match t {
                Term::Intercept => TermBasis::Intercept,
                Term::Linear { var } => {
                    column_checked(data, var)?;
                    TermBasis::Linear { var: var.clone() }
                }
                Term::Indicator { var, level } => {
                    column_checked(data, var)?;
                    TermBasis::Indicator {
                        var: var.clone(),
                        level: *level,
                    }
                }
                Term::Spline { var, dim } => {
                    let col = column_checked(data, var)?;
                    let present: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
                    let spline = CubicRegressionSpline::from_data(&present, *dim).map_err(|e| match e {
                        Error::Rank(m) => Error::Rank(format!("crs({var}): {m}")),
                        other => other,
                    })?;
                    TermBasis::Spline {
                        var: var.clone(),
                        spline,
                    }
                }
            };
            terms.push(basis);
        }
        Ok(DesignSpec {
            formula: formula.clone(),
            terms,
        })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn terms(&self) -> &[TermBasis] {
        &self.terms
    }

    pub fn n_columns(&self) -> usize {
        self.terms.iter().map(TermBasis::dim).sum()
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, TermBasis::Intercept))
    }

    /// Penalty blocks of the spline terms.
    pub fn penalty_blocks(&self) -> Vec<PenaltyBlock> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, t) in self.terms.iter().enumerate() {
            if let TermBasis::Spline { spline, .. } = t {
                out.push(PenaltyBlock {
                    term: i,
                    start,
                    dim: spline.dim(),
                    penalty: spline.penalty().to_vec(),
                });
            }
            start += t.dim();
        }
        out
    }

    /// Total quadratic penalty `P` (row-major `p x p`) for smoothing
    /// parameters `lambdas`, one per spline block. Each roughness matrix is
    /// rescaled to the Frobenius norm of its block of `XᵀX/n`, so `lambdas`
    /// are comparable across covariates. Spline blocks that duplicate the
    /// constant (an intercept or an earlier spline exists) also get a small
    /// ridge on their coefficient sum, which pins the otherwise free offset
    /// without changing fitted values.
    pub fn penalty_matrix(&self, x: &DesignMatrix, lambdas: &[f64], ridge: f64) -> Result<Vec<f64>> {
        let blocks = self.penalty_blocks();
        if lambdas.len() != blocks.len() {
            return Err(Error::Argument(format!(
                "{} smoothing parameters for {} spline blocks",
                lambdas.len(),
                blocks.len()
            )));
        }
        let p = self.n_columns();
        let mut pen = vec![0.0; p * p];
        let mut constant_seen = self.has_intercept();
        for (b, &lam) in blocks.iter().zip(lambdas) {
            let k = b.dim;
            let gram = x.gram_block(b.start, k);
            let g_norm = frobenius(&gram).max(1e-12);
            let s_norm = frobenius(&b.penalty);
            let s_scale = if s_norm > 0.0 { g_norm / s_norm } else { 0.0 };
            let r = if constant_seen { ridge * g_norm / k as f64 } else { 0.0 };
            for i in 0..k {
                for j in 0..k {
                    pen[(b.start + i) * p + b.start + j] += lam * s_scale * b.penalty[i * k + j] + r;
                }
            }
            constant_seen = true;
        }
        Ok(pen)
    }

    /// Basis row for one observation; the flag reports spline clamping.
    pub fn eval_row(&self, data: &Series, row: usize) -> Result<(Vec<f64>, bool)> {
        let mut out = Vec::with_capacity(self.n_columns());
        let mut clamped = false;
        for t in &self.terms {
            match t {
                TermBasis::Intercept => out.push(1.0),
                TermBasis::Linear { var } => out.push(present(data, var, row)?),
                TermBasis::Indicator { var, level } => {
                    out.push(if present(data, var, row)? == *level { 1.0 } else { 0.0 })
                }
                TermBasis::Spline { var, spline } => {
                    let (vals, c) = spline.eval(present(data, var, row)?);
                    clamped |= c;
                    out.extend(vals);
                }
            }
        }
        Ok((out, clamped))
    }

    pub fn build(&self, data: &Series) -> Result<DesignMatrix> {
        let n = data.n_rows();
        let p = self.n_columns();
        let mut values = Vec::with_capacity(n * p);
        let mut clamped_rows = 0;
        for r in 0..n {
            let (row, c) = self.eval_row(data, r)?;
            clamped_rows += usize::from(c);
            values.extend(row);
        }
        if clamped_rows > 0 {
            log::warn!("{clamped_rows} rows outside the spline training range were clamped");
        }
        Ok(DesignMatrix {
            n_rows: n,
            n_cols: p,
            values,
            clamped_rows,
        })
    }

    /// Starting coefficients reproducing the constant `value` on the link scale.
    pub fn constant_coefficients(&self, value: f64) -> Vec<f64> {
        let mut beta = vec![0.0; self.n_columns()];
        let mut start = 0;
        if self.has_intercept() {
            for t in &self.terms {
                if matches!(t, TermBasis::Intercept) {
                    beta[start] = value;
                }
                start += t.dim();
            }
            return beta;
        }
        // splines reproduce constants; use the first one
        for t in &self.terms {
            if let TermBasis::Spline { spline, .. } = t {
                beta[start..start + spline.dim()].iter_mut().for_each(|b| *b = value);
                return beta;
            }
            start += t.dim();
        }
        beta
    }
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn present(data: &Series, var: &str, row: usize) -> Result<f64> {
    let v = data.value(var, row)?;
    if v.is_nan() {
        return Err(Error::Precondition(format!(
            "variable `{var}` is missing in row {row}; apply case deletion first"
        )));
    }
    Ok(v)
}

/// Builds the design for `formula` on `data`, placing knots on `data`.
pub fn build_design(formula: &Formula, data: &Series) -> Result<(DesignSpec, DesignMatrix)> {
    let spec = DesignSpec::fit(formula, data)?;
    let x = spec.build(data)?;
    Ok((spec, x))
}
