//! Threshold choice by expected quantile discrepancy on the exponential
//! scale, and re-estimation of a tail fit with the competition loss added to
//! its objective.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{fit_nonstationary_gpd, FitSpec, GpdFit};
use crate::error::{Error, Result};
use crate::numeric;
use crate::optim::{self, NelderMeadOptions};
use crate::scoring::competition_loss_unchecked;
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqdOptions {
    pub n_boot: usize,
    /// Size of the probability grid `j/(m+1)`.
    pub grid: usize,
    pub seed: u64,
}

impl Default for EqdOptions {
    fn default() -> Self {
        EqdOptions {
            n_boot: 100,
            grid: 500,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqdCandidate {
    pub level: f64,
    /// `None` when the candidate was skipped.
    pub discrepancy: Option<f64>,
    pub n_excess: usize,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqdResult {
    pub candidates: Vec<EqdCandidate>,
    pub n_boot: usize,
    pub grid: usize,
    pub seed: u64,
    pub chosen: f64,
    pub warnings: Vec<String>,
}

/// Mean over bootstrap resamples of the mean absolute difference between
/// sample quantiles of `e` and Exp(1) quantiles on `j/(m+1)`.
pub fn expected_discrepancy(e: &[f64], opts: &EqdOptions) -> f64 {
    let n = e.len();
    let m = opts.grid;
    let probs: Vec<f64> = (1..=m).map(|j| j as f64 / (m + 1) as f64).collect();
    let theory: Vec<f64> = probs.iter().map(|p| -(-p).ln_1p()).collect();
    let total: f64 = (0..opts.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = numeric::rng_for(opts.seed, r as u64);
            let mut b: Vec<f64> = (0..n).map(|_| e[rng.random_range(0..n)]).collect();
            numeric::sort_floats(&mut b);
            probs
                .iter()
                .zip(&theory)
                .map(|(&p, &t)| (numeric::quantile_sorted(&b, p) - t).abs())
                .sum::<f64>()
                / m as f64
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / opts.n_boot as f64
}

/// Fits `spec` at each candidate quantile level, transforms the excesses to
/// Exp(1) and scores them by expected quantile discrepancy; returns the
/// minimizing level. Candidates with too few excesses are skipped.
pub fn eqd_select(data: &Series, spec: &FitSpec, candidates: &[f64], opts: &EqdOptions) -> Result<EqdResult> {
    if candidates.is_empty() {
        return Err(Error::Argument("no threshold candidates".into()));
    }
    if let Some(c) = candidates.iter().find(|c| !(0.5..=0.99).contains(*c)) {
        return Err(Error::Argument(format!("candidate level {c} outside [0.5, 0.99]")));
    }
    if opts.n_boot < 50 {
        return Err(Error::Argument(format!("need at least 50 bootstrap resamples, got {}", opts.n_boot)));
    }
    if opts.grid == 0 {
        return Err(Error::Argument("empty probability grid".into()));
    }
    let scored: Vec<(f64, Result<(f64, usize)>)> = candidates
        .par_iter()
        .map(|&level| {
            let s = FitSpec {
                threshold: spec.threshold.with_tau(level),
                ..spec.clone()
            };
            let r = fit_nonstationary_gpd(&s, data).and_then(|fit| {
                let e = fit.transform_excesses_to_exponential(data)?;
                Ok((expected_discrepancy(&e, opts), e.len()))
            });
            (level, r)
        })
        .collect();
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(scored.len());
    for (level, r) in scored {
        match r {
            Ok((d, n)) => out.push(EqdCandidate {
                level,
                discrepancy: Some(d),
                n_excess: n,
                chosen: false,
            }),
            Err(e) => {
                let w = format!("candidate {level} skipped: {e}");
                log::warn!("{w}");
                warnings.push(w);
                out.push(EqdCandidate {
                    level,
                    discrepancy: None,
                    n_excess: 0,
                    chosen: false,
                });
            }
        }
    }
    let best = out
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.discrepancy.map(|d| (i, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InsufficientData {
            needed: spec.min_excesses,
            got: 0,
            context: "every threshold candidate was skipped".into(),
        })?;
    out[best].chosen = true;
    Ok(EqdResult {
        chosen: out[best].level,
        candidates: out,
        n_boot: opts.n_boot,
        grid: opts.grid,
        seed: opts.seed,
        warnings,
    })
}

/// Average competition loss of sorted exponential-scale excesses against
/// Exp(1) quantiles at `i/(n+1)`.
pub fn exponential_qq_loss(transformed: &[f64]) -> f64 {
    let e = numeric::sorted(transformed);
    let n = e.len() as f64;
    e.iter()
        .enumerate()
        .map(|(i, &q)| competition_loss_unchecked(q, -(-((i + 1) as f64) / (n + 1.0)).ln_1p()))
        .sum::<f64>()
        / n
}

/// Minimizes `-ℓ_pen(θ) + w·Σ L(q*_i, q̂_i)/n_v` from the coefficients of
/// `fit`, where `q*` are the ordered transformed excesses under `θ`. With
/// `weight = 0` the fit is returned unchanged. On optimizer failure the
/// original fit is returned with a warning.
pub fn loss_augmented_refit(fit: &GpdFit, data: &Series, weight: f64) -> Result<GpdFit> {
    let problem = fit.problem(data)?;
    let n_v = problem.z.len();
    if n_v == 0 {
        return Err(Error::Precondition("loss-augmented refit needs threshold exceedances".into()));
    }
    if weight == 0.0 {
        return Ok(fit.clone());
    }
    let nf = n_v as f64;
    let objective = |theta: &[f64]| -> f64 {
        let (f, _) = problem.objective(theta);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        let e: Vec<f64> = (0..n_v)
            .map(|i| -crate::gpd::log_survival_unchecked(problem.z[i], problem.params(theta, i)))
            .collect();
        if e.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        nf * f + weight * exponential_qq_loss(&e)
    };
    let start = fit.theta();
    let res = optim::nelder_mead(
        objective,
        &start,
        NelderMeadOptions {
            max_evals: 20_000,
            f_tol: 1e-13,
            x_tol: 1e-9,
            initial_step: 0.05,
        },
    );
    if !res.value.is_finite() || !res.converged {
        let mut out = fit.clone();
        let w = "loss-augmented refit did not converge; keeping the unadjusted fit".to_string();
        log::warn!("{w}");
        out.warnings.push(w);
        return Ok(out);
    }
    Ok(fit.with_theta(&problem, &res.x))
}
