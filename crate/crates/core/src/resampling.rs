//! Stationary block bootstrap, the semi-parametric response bootstrap for
//! tail fits, and a parametric bootstrap for conditional-extremes group
//! probabilities. Replicate `r` draws from the stream `(seed, r)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_nonstationary_gpd, FitSpec, GpdFit, Smoothing};
use crate::condex::{fit_exceedances, group_exceedance_probability, CondExtFit};
use crate::error::{Error, Result};
use crate::numeric;
use crate::series::Series;

/// Row indices of one stationary-bootstrap resample: blocks of length
/// `1 + Geometric(1/l)` failures (mean `l`) from uniform starts, wrapping
/// around the end, cut to `n`.
pub fn stationary_bootstrap_indices<R: Rng>(n: usize, l: usize, rng: &mut R) -> Result<Vec<usize>> {
    if l == 0 {
        return Err(Error::Argument("mean block length must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let geom = Geometric::new(1.0 / l as f64).map_err(|e| Error::Argument(e.to_string()))?;
    while out.len() < n {
        let start = rng.random_range(0..n);
        let len = 1 + geom.sample(rng) as usize;
        for k in 0..len.min(n - out.len()) {
            out.push((start + k) % n);
        }
    }
    Ok(out)
}

/// Lengths of the first `count` blocks the generator would draw.
pub fn block_lengths<R: Rng>(l: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if l == 0 {
        return Err(Error::Argument("mean block length must be at least 1".into()));
    }
    let geom = Geometric::new(1.0 / l as f64).map_err(|e| Error::Argument(e.to_string()))?;
    Ok((0..count).map(|_| 1 + geom.sample(rng) as usize).collect())
}

/// How covariates are treated when the uniform-scale responses are resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovariateMode {
    /// Whole rows are resampled, covariates move with their response.
    #[default]
    Travel,
    /// Covariates stay in place; only the uniform responses are resampled.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub block_mean: usize,
    pub seed: u64,
    pub covariates: CovariateMode,
    /// Refit with the smoothing parameters of the original fit instead of
    /// repeating the CV search.
    pub reuse_smoothing: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_boot: 200,
            block_mean: 50,
            seed: 1,
            covariates: CovariateMode::Travel,
            reuse_smoothing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub median: f64,
    pub lo50: f64,
    pub hi50: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Median and central 50%/95% percentile intervals of a replicate set.
pub fn percentile_interval(values: &[f64]) -> Result<Interval> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "finite bootstrap replicates".into(),
        });
    }
    let s = numeric::sorted(&finite);
    let q = |p| numeric::quantile_sorted(&s, p);
    Ok(Interval {
        median: q(0.5),
        lo50: q(0.25),
        hi50: q(0.75),
        lo95: q(0.025),
        hi95: q(0.975),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub config: BootstrapConfig,
    /// One vector of target estimates per retained replicate, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

impl BootstrapResult {
    /// Percentile intervals for each target.
    pub fn intervals(&self) -> Result<Vec<Interval>> {
        let k = self.replicates.first().map_or(0, Vec::len);
        (0..k)
            .map(|j| percentile_interval(&self.replicates.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Probability-integral transform of the response under `fit`; missing
/// responses stay missing.
pub fn response_to_uniform(fit: &GpdFit, data: &Series) -> Result<Vec<f64>> {
    let y = data.column(&fit.response)?;
    (0..data.n_rows())
        .map(|r| {
            if y[r].is_nan() {
                return Ok(f64::NAN);
            }
            match fit.row_model(data, r) {
                Ok(m) => Ok(fit.cdf_at(y[r], &m)),
                Err(Error::Precondition(_)) => Ok(f64::NAN),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// One resampled data set: block-resampled uniforms mapped back through `fit`.
fn resample_once(fit: &GpdFit, data: &Series, u: &[f64], idx: &[usize], mode: CovariateMode) -> Result<Series> {
    let y = data.column(&fit.response)?;
    let mut out = match mode {
        CovariateMode::Travel => data.select_rows(idx),
        CovariateMode::Fixed => data.clone(),
    };
    let mut y_new = Vec::with_capacity(idx.len());
    for (t, &s) in idx.iter().enumerate() {
        let covariate_row = match mode {
            CovariateMode::Travel => s,
            CovariateMode::Fixed => t,
        };
        let ut = u[s];
        if ut.is_nan() {
            y_new.push(if mode == CovariateMode::Travel { y[s] } else { f64::NAN });
            continue;
        }
        match fit.row_model(data, covariate_row) {
            Ok(m) => y_new.push(fit.quantile_at(ut.min(1.0 - 1e-15), &m)),
            Err(Error::Precondition(_)) => y_new.push(f64::NAN),
            Err(e) => return Err(e),
        }
    }
    out.set_column(fit.response.clone(), y_new)?;
    Ok(out)
}

/// Transforms the response to uniform with `fit`, block-resamples, maps back
/// to the original scale, refits `spec` and evaluates `estimate` on each
/// replicate together with its data. Failed replicates are dropped and counted.
pub fn semiparametric_response_bootstrap<F>(
    fit: &GpdFit,
    spec: &FitSpec,
    data: &Series,
    cfg: &BootstrapConfig,
    estimate: F,
) -> Result<BootstrapResult>
where
    F: Fn(&GpdFit, &Series) -> Result<Vec<f64>> + Sync,
{
    if cfg.n_boot == 0 {
        return Err(Error::Argument("need at least one bootstrap replicate".into()));
    }
    let u = response_to_uniform(fit, data)?;
    let n = data.n_rows();
    let refit_spec = if cfg.reuse_smoothing && !fit.lambdas.is_empty() {
        spec.clone().with_smoothing(Smoothing::Fixed {
            lambdas: fit.lambdas.clone(),
        })
    } else {
        spec.clone()
    };
    let reps: Vec<Result<Vec<f64>>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = numeric::rng_for(cfg.seed, r as u64);
            let idx = stationary_bootstrap_indices(n, cfg.block_mean, &mut rng)?;
            let boot = resample_once(fit, data, &u, &idx, cfg.covariates)?;
            let refit = fit_nonstationary_gpd(&refit_spec, &boot)?;
            estimate(&refit, &boot)
        })
        .collect();
    let mut replicates = Vec::with_capacity(cfg.n_boot);
    let mut warnings = Vec::new();
    for (r, rep) in reps.into_iter().enumerate() {
        match rep {
            Ok(v) => replicates.push(v),
            Err(e) => warnings.push(format!("replicate {r} dropped: {e}")),
        }
    }
    let dropped = cfg.n_boot - replicates.len();
    if dropped > 0 {
        log::warn!("{dropped} of {} bootstrap replicates dropped", cfg.n_boot);
    }
    Ok(BootstrapResult {
        config: cfg.clone(),
        replicates,
        dropped,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityBootstrap {
    pub n_boot: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub dropped: usize,
}

/// Simulates as many conditioning exceedances as `fit` holds, refits, and
/// recomputes the group probability at `levels`, `n_boot` times.
pub fn parametric_bootstrap_condex(
    fit: &CondExtFit,
    levels: &[f64],
    n_sim: usize,
    n_boot: usize,
    seed: u64,
) -> Result<ProbabilityBootstrap> {
    if fit.residuals.is_empty() {
        return Err(Error::Precondition("fit holds no residual rows".into()));
    }
    let m = fit.residuals.len();
    let reps: Vec<Result<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = numeric::rng_for(seed, r as u64);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    let z = &fit.residuals[rng.random_range(0..m)];
                    fit.reconstruct(fit.threshold + e, z)
                })
                .collect();
            let refit = fit_exceedances(&rows, fit.cond, fit.threshold, fit.u_level)?;
            let sim_seed = rng.random::<u64>();
            Ok(group_exceedance_probability(&refit, levels, n_sim, sim_seed)?.probability)
        })
        .collect();
    let estimates: Vec<f64> = reps.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let dropped = n_boot - estimates.len();
    if dropped > 0 {
        log::warn!("{dropped} of {n_boot} parametric replicates dropped");
    }
    Ok(ProbabilityBootstrap {
        n_boot,
        seed,
        estimates,
        dropped,
    })
}
