//! Marginal distribution of the response obtained by averaging the
//! conditional tail model over observed covariate rows.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{GpdFit, RowModel};
use crate::error::{Error, Result};
use crate::gpd;
use crate::numeric;
use crate::series::Series;

/// Daily exceedance probability of a `years`-year event on a calendar with
/// `days_per_year` days.
pub fn return_period_probability(years: f64, days_per_year: f64) -> f64 {
    1.0 / (years * days_per_year)
}

const CHUNK: usize = 4096;

/// Conditional models at every covariate row, averaged with equal weight.
#[derive(Debug, Clone)]
pub struct MarginalModel<'a> {
    fit: &'a GpdFit,
    rows: Vec<RowModel>,
    max_threshold: f64,
    /// Rows skipped because a covariate was missing.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalQuantile {
    pub prob: f64,
    pub quantile: f64,
}

impl<'a> MarginalModel<'a> {
    pub fn new(fit: &'a GpdFit, data: &Series) -> Result<Self> {
        let mut rows = Vec::with_capacity(data.n_rows());
        let mut dropped = 0;
        for r in 0..data.n_rows() {
            match fit.row_model(data, r) {
                Ok(m) => rows.push(m),
                Err(Error::Precondition(_)) => dropped += 1,
                Err(e) => return Err(e),
            }
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData {
                needed: 1,
                got: 0,
                context: "covariate rows for the marginal average".into(),
            });
        }
        let max_threshold = rows.iter().map(|m| m.threshold).fold(f64::NEG_INFINITY, f64::max);
        Ok(MarginalModel {
            fit,
            rows,
            max_threshold,
            dropped,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn max_threshold(&self) -> f64 {
        self.max_threshold
    }

    fn check_tail(&self, y: f64) -> Result<()> {
        if y < self.max_threshold {
            return Err(Error::Domain(format!(
                "y = {y} lies below the threshold of some rows (max {}); \
                 the tail average needs y above every threshold, use an empirical quantile below it",
                self.max_threshold
            )));
        }
        Ok(())
    }

    fn survival_unchecked(&self, y: f64) -> f64 {
        let partial: Vec<f64> = self
            .rows
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|m| m.rate * gpd::survival_unchecked(y - m.threshold, m.params)).sum())
            .collect();
        partial.iter().sum::<f64>() / self.rows.len() as f64
    }

    /// `1 - F_Y(y)`.
    pub fn survival(&self, y: f64) -> Result<f64> {
        self.check_tail(y)?;
        Ok(self.survival_unchecked(y))
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        Ok(1.0 - self.survival(y)?)
    }

    /// Root of `F_Y(q) = prob` by bisection on the log survival.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::Domain(format!("probability {prob} outside (0,1)")));
        }
        let target = (1.0 - prob).ln();
        let lo = self.max_threshold;
        let s_lo = self.survival_unchecked(lo);
        if s_lo < 1.0 - prob {
            return Err(Error::Domain(format!(
                "probability {prob} is not in the tail: marginal survival at the highest threshold is {s_lo}"
            )));
        }
        let mut width = self
            .rows
            .iter()
            .map(|m| m.params.scale)
            .fold(0.0, f64::max)
            .max(1e-12);
        let mut hi = lo + width;
        let mut tries = 0;
        while self.survival_unchecked(hi) > 1.0 - prob {
            width *= 2.0;
            hi = lo + width;
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return Err(Error::Numeric(format!("could not bracket the {prob} quantile above {lo}")));
            }
        }
        let bracket_lo = if tries == 0 { lo } else { lo + width / 2.0 };
        numeric::bisect(
            |q| {
                let s = self.survival_unchecked(q);
                if s <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    s.ln() - target
                }
            },
            bracket_lo,
            hi,
            1e-12,
        )
        .map_err(|e| Error::Numeric(format!("marginal quantile bracket [{bracket_lo}, {hi}]: {e}")))
    }

    pub fn fit(&self) -> &GpdFit {
        self.fit
    }
}

pub fn marginal_cdf(fit: &GpdFit, data: &Series, y: f64) -> Result<f64> {
    MarginalModel::new(fit, data)?.cdf(y)
}

pub fn marginal_quantile(fit: &GpdFit, data: &Series, prob: f64) -> Result<f64> {
    MarginalModel::new(fit, data)?.quantile(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_thousand() {
        assert_eq!(return_period_probability(200.0, 300.0), 1.0 / 60000.0);
    }
}
