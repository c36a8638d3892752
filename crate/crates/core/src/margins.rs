//! Probability-integral transforms between the standard marginal scales and
//! empirical / semi-parametric marginal CDFs.
//!
//! Transforms carry both the CDF and the survival probability so that values
//! deep in either tail survive the round trip without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams};
use crate::numeric;

/// Uniform inputs are clamped to `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]` before inversion.
pub const UNIFORM_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginScale {
    Uniform,
    Exponential,
    Gumbel,
    Laplace,
}

impl std::str::FromStr for MarginScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MarginScale::Uniform),
            "exponential" | "exp" => Ok(MarginScale::Exponential),
            "gumbel" => Ok(MarginScale::Gumbel),
            "laplace" => Ok(MarginScale::Laplace),
            other => Err(Error::Argument(format!("unknown margin scale `{other}`"))),
        }
    }
}

impl MarginScale {
    /// (CDF, survival) at `x`, validating the support.
    fn probs(self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite value {x}")));
        }
        let (p, q) = match self {
            MarginScale::Uniform => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain(format!("uniform value {x} outside (0,1)")));
                }
                let u = x.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
                (u, 1.0 - u)
            }
            MarginScale::Exponential => {
                if x < 0.0 {
                    return Err(Error::Domain(format!("exponential value {x} is negative")));
                }
                (-(-x).exp_m1(), (-x).exp())
            }
            MarginScale::Gumbel => {
                let t = (-x).exp();
                ((-t).exp(), -(-t).exp_m1())
            }
            MarginScale::Laplace => {
                if x < 0.0 {
                    let p = 0.5 * x.exp();
                    (p, 1.0 - p)
                } else {
                    let q = 0.5 * (-x).exp();
                    (1.0 - q, q)
                }
            }
        };
        Ok((p.max(f64::MIN_POSITIVE), q.max(f64::MIN_POSITIVE)))
    }

    /// Inverse CDF using whichever of `p`, `q = 1 - p` is the smaller tail.
    fn quantile_from_probs(self, p: f64, q: f64) -> f64 {
        let lower = p < 0.5;
        match self {
            MarginScale::Uniform => {
                if lower {
                    p
                } else {
                    1.0 - q
                }
            }
            MarginScale::Exponential => {
                if lower {
                    -(-p).ln_1p()
                } else {
                    -q.ln()
                }
            }
            MarginScale::Gumbel => {
                if lower {
                    -(-p.ln()).ln()
                } else {
                    -(-(-q).ln_1p()).ln()
                }
            }
            MarginScale::Laplace => {
                if lower {
                    (2.0 * p).ln()
                } else {
                    -(2.0 * q).ln()
                }
            }
        }
    }

    pub fn cdf(self, x: f64) -> Result<f64> {
        self.probs(x).map(|(p, _)| p)
    }

    pub fn survival(self, x: f64) -> Result<f64> {
        self.probs(x).map(|(_, q)| q)
    }

    pub fn quantile(self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0,1)")));
        }
        Ok(self.quantile_from_probs(p, 1.0 - p))
    }

    /// Quantile from an upper-tail probability, exact for tiny `q`.
    pub fn upper_quantile(self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("probability {q} outside (0,1)")));
        }
        Ok(self.quantile_from_probs(1.0 - q, q))
    }
}

/// Maps `value` from scale `from` to scale `to` via `F_to^{-1}(F_from(value))`.
pub fn transform(value: f64, from: MarginScale, to: MarginScale) -> Result<f64> {
    let (p, q) = from.probs(value)?;
    Ok(to.quantile_from_probs(p, q))
}

/// Rank-based empirical CDF with the `rank / (n + 1)` convention; ties take
/// their average rank.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Argument("empirical CDF of an empty sample".into()));
        }
        if sample.iter().any(|v| v.is_nan()) {
            return Err(Error::Argument("empirical CDF sample contains NaN".into()));
        }
        Ok(EmpiricalCdf {
            sorted: numeric::sorted(sample),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        let upto = self.sorted.partition_point(|&v| v <= x);
        let ties = upto - below;
        let rank = if ties > 0 {
            below as f64 + (ties as f64 + 1.0) / 2.0
        } else {
            below as f64
        };
        rank / (self.sorted.len() as f64 + 1.0)
    }

    /// Inverse of the rank convention, interpolating between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let h = p * (n as f64 + 1.0);
        if h <= 1.0 {
            return self.sorted[0];
        }
        if h >= n as f64 {
            return self.sorted[n - 1];
        }
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        self.sorted[lo - 1] + frac * (self.sorted[lo] - self.sorted[lo - 1])
    }
}

pub fn empirical_cdf(sample: &[f64], x: f64) -> Result<f64> {
    Ok(EmpiricalCdf::new(sample)?.cdf(x))
}

/// Rank transform of a sample to uniform margins, `rank / (n + 1)` with average ties.
pub fn to_uniform_ranks(sample: &[f64]) -> Vec<f64> {
    let n = sample.len() as f64;
    numeric::average_ranks(sample).into_iter().map(|r| r / (n + 1.0)).collect()
}

/// Empirical body below a threshold, GPD tail above it.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiParametricCdf {
    body: EmpiricalCdf,
    threshold: f64,
    tail: GpdParams,
    tail_fraction: f64,
}

impl SemiParametricCdf {
    /// Assembles the CDF from parts. The tail fraction is taken from the
    /// empirical CDF at the threshold so that the two pieces join continuously.
    pub fn from_parts(sample: &[f64], threshold: f64, tail: GpdParams) -> Result<Self> {
        let body = EmpiricalCdf::new(sample)?;
        let tail_fraction = 1.0 - body.cdf(threshold);
        if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "threshold {threshold} leaves tail fraction {tail_fraction} outside (0,1)"
            )));
        }
        Ok(SemiParametricCdf {
            body,
            threshold,
            tail,
            tail_fraction,
        })
    }

    /// Threshold at the empirical `level`-quantile, GPD fitted to the excesses.
    pub fn fit(sample: &[f64], level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("threshold level {level} outside (0,1)")));
        }
        let threshold = numeric::quantile(sample, level);
        let excesses: Vec<f64> = sample.iter().filter(|&&v| v > threshold).map(|v| v - threshold).collect();
        let tail = gpd::fit_mle(&excesses)?.params;
        Self::from_parts(sample, threshold, tail)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn tail(&self) -> GpdParams {
        self.tail
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.threshold {
            self.body.cdf(x)
        } else {
            1.0 - self.tail_fraction * gpd::survival_unchecked(x - self.threshold, self.tail)
        }
    }

    /// Upper-tail probability, accurate above the threshold.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.threshold {
            1.0 - self.body.cdf(x)
        } else {
            self.tail_fraction * gpd::survival_unchecked(x - self.threshold, self.tail)
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0,1)")));
        }
        if p <= 1.0 - self.tail_fraction {
            Ok(self.body.quantile(p))
        } else {
            let cond = 1.0 - (1.0 - p) / self.tail_fraction;
            Ok(self.threshold + gpd::quantile(cond, self.tail)?)
        }
    }

    /// Transforms `x` onto a standard scale through this CDF.
    pub fn to_scale(&self, x: f64, to: MarginScale) -> f64 {
        let q = self.survival(x).clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
        let p = self.cdf(x).clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
        to.quantile_from_probs(p, q)
    }
}
