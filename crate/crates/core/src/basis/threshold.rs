//! Covariate-dependent thresholds: constants, per-stratum steps, and
//! log-link quantile regression.

use serde::{Deserialize, Serialize};

use super::design::DesignSpec;
use super::formula::Formula;
use crate::error::{Error, Result};
use crate::numeric;
use crate::optim::{self, BfgsOptions};
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLevel {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdModel {
    Constant { value: f64 },
    /// One constant per level of `var` (e.g. season).
    Stepped { var: String, levels: Vec<StepLevel> },
    /// `log v(x) = X(x) β`.
    Regression { spec: DesignSpec, coef: Vec<f64>, tau: f64 },
}

impl ThresholdModel {
    /// Threshold for one row; the flag reports spline clamping.
    pub fn value_at(&self, data: &Series, row: usize) -> Result<(f64, bool)> {
        match self {
            ThresholdModel::Constant { value } => Ok((*value, false)),
            ThresholdModel::Stepped { var, levels } => {
                let x = data.value(var, row)?;
                levels
                    .iter()
                    .find(|l| l.level == x)
                    .map(|l| (l.value, false))
                    .ok_or_else(|| Error::Domain(format!("no threshold step for {var} = {x}")))
            }
            ThresholdModel::Regression { spec, coef, .. } => {
                let (r, clamped) = spec.eval_row(data, row)?;
                let eta: f64 = r.iter().zip(coef).map(|(a, b)| a * b).sum();
                Ok((eta.exp(), clamped))
            }
        }
    }

    pub fn values(&self, data: &Series) -> Result<Vec<f64>> {
        (0..data.n_rows()).map(|r| self.value_at(data, r).map(|v| v.0)).collect()
    }

    /// Variables the threshold depends on.
    pub fn variables(&self) -> Vec<String> {
        match self {
            ThresholdModel::Constant { .. } => Vec::new(),
            ThresholdModel::Stepped { var, .. } => vec![var.clone()],
            ThresholdModel::Regression { spec, .. } => {
                spec.formula().variables().into_iter().map(String::from).collect()
            }
        }
    }

    /// Same model with every threshold multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> ThresholdModel {
        match self {
            ThresholdModel::Constant { value } => ThresholdModel::Constant { value: value * factor },
            ThresholdModel::Stepped { var, levels } => ThresholdModel::Stepped {
                var: var.clone(),
                levels: levels
                    .iter()
                    .map(|l| StepLevel {
                        level: l.level,
                        value: l.value * factor,
                    })
                    .collect(),
            },
            ThresholdModel::Regression { spec, coef, tau } => {
                let mut coef = coef.clone();
                let shift = spec.constant_coefficients(factor.ln());
                coef.iter_mut().zip(shift).for_each(|(c, s)| *c += s);
                ThresholdModel::Regression {
                    spec: spec.clone(),
                    coef,
                    tau: *tau,
                }
            }
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    Ok(())
}

fn present_values(data: &Series, var: &str) -> Result<Vec<f64>> {
    Ok(data.column(var)?.iter().copied().filter(|v| !v.is_nan()).collect())
}

/// Sample `tau`-quantile of `response`.
pub fn constant_threshold(data: &Series, response: &str, tau: f64) -> Result<ThresholdModel> {
    check_tau(tau)?;
    let y = present_values(data, response)?;
    if y.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "threshold".into(),
        });
    }
    Ok(ThresholdModel::Constant {
        value: numeric::quantile(&y, tau),
    })
}

/// Per-level sample `tau`-quantiles of `response`, levels sorted ascending.
pub fn stepped_threshold(data: &Series, response: &str, var: &str, tau: f64) -> Result<ThresholdModel> {
    check_tau(tau)?;
    let y = data.column(response)?;
    let s = data.column(var)?;
    let mut levels: Vec<f64> = s.iter().copied().filter(|v| !v.is_nan()).collect();
    numeric::sort_floats(&mut levels);
    levels.dedup();
    let mut out = Vec::with_capacity(levels.len());
    for level in levels {
        let ys: Vec<f64> = y
            .iter()
            .zip(s)
            .filter(|(v, l)| !v.is_nan() && **l == level)
            .map(|(v, _)| *v)
            .collect();
        if ys.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: ys.len(),
                context: format!("threshold stratum {var} = {level}"),
            });
        }
        out.push(StepLevel {
            level,
            value: numeric::quantile(&ys, tau),
        });
    }
    Ok(ThresholdModel::Stepped {
        var: var.to_string(),
        levels: out,
    })
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

const QR_SMOOTHING: f64 = 1e-4;
const QR_RIDGE: f64 = 1e-3;

/// Quantile regression `log v_τ(x) = X(x) β` minimizing the pinball loss.
///
/// The check function is replaced by `τu + h·softplus(-u/h)`, which tends to
/// it as `h → 0`; `h` is driven down from `0.1` to `1e-5` (relative to the
/// mean absolute response) with warm starts. Spline blocks carry a light
/// fixed roughness penalty.
pub fn fit_threshold_quantile(formula: &Formula, data: &Series, response: &str, tau: f64) -> Result<ThresholdModel> {
    check_tau(tau)?;
    let mut vars: Vec<&str> = formula.variables();
    vars.push(response);
    let (data, _) = data.complete_cases(&vars)?;
    let y = data.column(response)?;
    let n = y.len();
    let spec = DesignSpec::fit(formula, &data)?;
    let p = spec.n_columns();
    if n < p.max(10) {
        return Err(Error::InsufficientData {
            needed: p.max(10),
            got: n,
            context: "quantile regression".into(),
        });
    }
    let x = spec.build(&data)?;
    let q0 = numeric::quantile(y, tau);
    if !(q0 > 0.0) {
        return Err(Error::Domain(format!(
            "log-link threshold needs a positive {tau}-quantile, got {q0}"
        )));
    }
    let lambdas = vec![QR_SMOOTHING; spec.penalty_blocks().len()];
    let pen = spec.penalty_matrix(&x, &lambdas, QR_RIDGE)?;
    let scale = numeric::mean(&y.iter().map(|v| v.abs()).collect::<Vec<_>>()).max(1e-300);
    let nf = n as f64;

    let mut beta = spec.constant_coefficients(q0.ln());
    for h in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
        let objective = |b: &[f64]| -> (f64, Vec<f64>) {
            let eta = x.mul(b);
            let mut f = 0.0;
            let mut g = vec![0.0; p];
            for i in 0..n {
                if eta[i] > 700.0 {
                    return (f64::INFINITY, g);
                }
                let v = eta[i].exp();
                let u = (y[i] - v) / scale;
                f += tau * u + h * softplus(-u / h);
                let du = tau - sigmoid(-u / h);
                let d_eta = -du * v / scale;
                for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                    *gj += d_eta * xj;
                }
            }
            f /= nf;
            g.iter_mut().for_each(|v| *v /= nf);
            for i in 0..p {
                let pb: f64 = (0..p).map(|j| pen[i * p + j] * b[j]).sum();
                f += 0.5 * b[i] * pb;
                g[i] += pb;
            }
            (f, g)
        };
        let res = optim::bfgs(
            objective,
            &beta,
            BfgsOptions {
                max_iter: 2000,
                grad_tol: 1e-10,
                f_tol: 1e-14,
                max_step: 1.0,
            },
        );
        if !res.value.is_finite() {
            return Err(Error::Fit("quantile regression diverged".into()));
        }
        beta = res.x;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit("quantile regression produced non-finite coefficients".into()));
    }
    Ok(ThresholdModel::Regression { spec, coef: beta, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn tau_domain() {
        let d = Series::from_columns(vec![("y", vec![1.0, 2.0, 3.0])]).unwrap();
        assert!(matches!(
            fit_threshold_quantile(&Formula::intercept(), &d, "y", 1.0),
            Err(Error::Domain(_))
        ));
        assert!(stepped_threshold(&d, "y", "y", 0.0).is_err());
    }

    #[test]
    fn intercept_only_matches_sample_quantile() {
        let mut rng = numeric::rng_for(3, 0);
        let y: Vec<f64> = (0..2000).map(|_| -rng.random::<f64>().ln() + 0.1).collect();
        let d = Series::from_columns(vec![("y", y.clone())]).unwrap();
        let m = fit_threshold_quantile(&Formula::intercept(), &d, "y", 0.9).unwrap();
        let v = m.value_at(&d, 0).unwrap().0;
        let q = numeric::quantile(&y, 0.9);
        assert!((v / q - 1.0).abs() < 0.005, "{v} vs {q}");
    }

    #[test]
    fn stepped_levels() {
        let d = Series::from_columns(vec![
            ("y", vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]),
            ("season", vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]),
        ])
        .unwrap();
        let m = stepped_threshold(&d, "y", "season", 0.5).unwrap();
        assert_eq!(m.values(&d).unwrap(), vec![2.0, 2.0, 2.0, 20.0, 20.0, 20.0]);
        assert_eq!(m.scaled(2.0).values(&d).unwrap()[3], 40.0);
    }
}
