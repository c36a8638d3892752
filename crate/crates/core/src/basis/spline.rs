//! Cubic regression splines parameterized by their values at the knots
//! (natural cubic interpolants), with the integrated squared second
//! derivative as penalty.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicRegressionSpline {
    knots: Vec<f64>,
    /// Maps knot values to knot second derivatives (`k x k`, row-major, zero first/last rows).
    second_deriv: Vec<f64>,
    /// `∫ f''(x)^2 dx = βᵀ S β` (`k x k`, row-major).
    penalty: Vec<f64>,
}

impl CubicRegressionSpline {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 3 {
            return Err(Error::Argument(format!("spline needs at least 3 knots, got {k}")));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Rank("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let m = k - 2;
        let mut d = DMatrix::<f64>::zeros(m, k);
        let mut b = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < m {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let b_inv = b
            .try_inverse()
            .ok_or_else(|| Error::Rank("singular spline band matrix".into()))?;
        let f = &b_inv * &d;
        let s = d.transpose() * &f;
        let mut second_deriv = vec![0.0; k * k];
        for i in 0..m {
            for j in 0..k {
                second_deriv[(i + 1) * k + j] = f[(i, j)];
            }
        }
        let mut penalty = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                penalty[i * k + j] = 0.5 * (s[(i, j)] + s[(j, i)]);
            }
        }
        Ok(CubicRegressionSpline {
            knots,
            second_deriv,
            penalty,
        })
    }

    /// `dim` knots at equally spaced sample quantiles of `values`.
    pub fn from_data(values: &[f64], dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Argument(format!("spline dimension must be at least 3, got {dim}")));
        }
        let sorted = numeric::sorted(values);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < dim {
            return Err(Error::Rank(format!(
                "spline dimension {dim} exceeds the {} distinct covariate values",
                distinct.len()
            )));
        }
        let at = |src: &[f64]| -> Vec<f64> {
            (0..dim)
                .map(|j| numeric::quantile_sorted(src, j as f64 / (dim - 1) as f64))
                .collect()
        };
        let mut knots = at(&sorted);
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            // heavy ties: place knots on quantiles of the distinct values instead
            knots = at(&distinct);
        }
        Self::new(knots)
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Row-major `dim x dim` penalty matrix.
    pub fn penalty(&self) -> &[f64] {
        &self.penalty
    }

    /// Basis values at `x`; values outside the knot range are clamped to the
    /// boundary knot. The flag reports whether clamping happened.
    pub fn eval(&self, x: f64) -> (Vec<f64>, bool) {
        let k = self.knots.len();
        let lo = self.knots[0];
        let hi = self.knots[k - 1];
        let clamped = x < lo || x > hi;
        let x = x.clamp(lo, hi);
        let j = (self.knots.partition_point(|&t| t <= x).max(1) - 1).min(k - 2);
        let (xl, xr) = (self.knots[j], self.knots[j + 1]);
        let h = xr - xl;
        let am = (xr - x) / h;
        let ap = (x - xl) / h;
        let cm = ((xr - x).powi(3) / h - h * (xr - x)) / 6.0;
        let cp = ((x - xl).powi(3) / h - h * (x - xl)) / 6.0;
        let mut row = vec![0.0; k];
        row[j] += am;
        row[j + 1] += ap;
        for c in 0..k {
            row[c] += cm * self.second_deriv[j * k + c] + cp * self.second_deriv[(j + 1) * k + c];
        }
        (row, clamped)
    }
}
