//! Conditional extremes on Laplace margins: given `W_i > u`, the other
//! coordinates follow `W_j = α_j W_i + W_i^{β_j} Z_j`. Parameters come from a
//! Gaussian working likelihood; the residual rows `Z` are kept whole and
//! resampled to simulate joint tail events.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::{self, MarginScale};
use crate::numeric;
use crate::optim::{self, NelderMeadOptions};
use crate::series::Calendar;

pub const ALPHA_BOUNDS: (f64, f64) = (-1.0, 1.0);
pub const BETA_BOUNDS: (f64, f64) = (-10.0, 1.0);
/// Fewer conditioning exceedances than this trigger a warning.
pub const RECOMMENDED_EXCEEDANCES: usize = 100;
const MIN_EXCEEDANCES: usize = 10;
const SIM_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondExtFit {
    /// Conditioning coordinate within the group.
    pub cond: usize,
    pub d: usize,
    /// Coordinates other than `cond`, in order; `alpha[k]` belongs to `others[k]`.
    pub others: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Working residual means and standard deviations.
    pub mu: Vec<f64>,
    pub sd: Vec<f64>,
    pub u_level: f64,
    /// Conditioning threshold on the Laplace scale.
    pub threshold: f64,
    /// One row per conditioning exceedance, aligned with `others`.
    pub residuals: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Rank transform of every column to Laplace margins.
pub fn laplace_transform(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    cols.iter()
        .map(|c| {
            margins::to_uniform_ranks(c)
                .into_iter()
                .map(|u| MarginScale::Laplace.quantile(u).unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}

/// Upper-tail Laplace level `-ln(2p)` for `p ∈ (0, 1/2]`.
pub fn laplace_level(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::Domain(format!("upper-tail probability {p} outside (0, 0.5]")));
    }
    Ok(-(2.0 * p).ln())
}

/// Laplace levels exceeded once per year and once per month on average.
pub fn challenge_levels(cal: &Calendar) -> Result<(f64, f64)> {
    Ok((
        laplace_level(1.0 / cal.days_per_year as f64)?,
        laplace_level(1.0 / cal.days_per_month as f64)?,
    ))
}

/// Profiled working negative log-likelihood for one coordinate.
fn profile_nll(x: &[f64], y: &[f64], log_x: &[f64], sum_log_x: f64, a: f64, b: f64) -> f64 {
    if !(ALPHA_BOUNDS.0..=ALPHA_BOUNDS.1).contains(&a) || !(BETA_BOUNDS.0..=BETA_BOUNDS.1).contains(&b) {
        return f64::INFINITY;
    }
    let n = x.len() as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for ((&xi, &yi), &lx) in x.iter().zip(y).zip(log_x) {
        let r = (yi - a * xi) * (-b * lx).exp();
        s1 += r;
        s2 += r * r;
    }
    let m = s1 / n;
    let var = s2 / n - m * m;
    if !(var > 0.0) {
        return f64::INFINITY;
    }
    0.5 * n * var.ln() + b * sum_log_x
}

fn near_bound(v: f64, (lo, hi): (f64, f64)) -> bool {
    (v - lo).abs() < 1e-4 || (hi - v).abs() < 1e-4
}

/// Fits one dependent coordinate; returns `(α, β, warning)`.
fn fit_pair(x: &[f64], y: &[f64], j: usize) -> Result<(f64, f64, Option<String>)> {
    if x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0)) {
        return Ok((1.0, 0.0, None));
    }
    let log_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let sum_log_x: f64 = log_x.iter().sum();
    let f = |t: &[f64]| profile_nll(x, y, &log_x, sum_log_x, t[0], t[1]);
    let opts = NelderMeadOptions {
        max_evals: 5_000,
        f_tol: 1e-12,
        x_tol: 1e-9,
        initial_step: 0.1,
    };
    let mut best: Option<optim::OptimResult> = None;
    for &(a0, b0) in &[(0.0, 0.0), (0.5, 0.2), (0.9, 0.1), (-0.5, 0.0), (0.2, 0.6)] {
        let r = optim::nelder_mead(f, &[a0, b0], opts);
        if r.value.is_finite() && best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Fit(format!("working likelihood for coordinate {j} is not finite")))?;
    // polish from the best start
    let r = optim::nelder_mead(f, &best.x, opts);
    let r = if r.value <= best.value { r } else { best };
    if !r.converged {
        return Err(Error::Fit(format!("conditional extremes fit for coordinate {j} did not converge")));
    }
    let (a, b) = (r.x[0], r.x[1]);
    let warning = (near_bound(a, ALPHA_BOUNDS) || near_bound(b, BETA_BOUNDS))
        .then(|| format!("coordinate {j}: estimate (α={a:.4}, β={b:.4}) is on the parameter box boundary"));
    Ok((a, b, warning))
}

/// Fits the model to Laplace-margin rows (column-major `w`) conditioning on
/// coordinate `cond` above its empirical `u_level` quantile.
pub fn fit_condext(w: &[Vec<f64>], cond: usize, u_level: f64) -> Result<CondExtFit> {
    if w.is_empty() || cond >= w.len() {
        return Err(Error::Argument(format!("conditioning index {cond} out of range for {} variables", w.len())));
    }
    if !(u_level > 0.0 && u_level < 1.0) {
        return Err(Error::Domain(format!("conditioning quantile {u_level} outside (0,1)")));
    }
    let n = w[cond].len();
    if w.iter().any(|c| c.len() != n) {
        return Err(Error::Argument("columns differ in length".into()));
    }
    let threshold = numeric::quantile(&w[cond], u_level);
    let rows: Vec<Vec<f64>> = (0..n)
        .filter(|&t| w[cond][t] > threshold)
        .map(|t| w.iter().map(|c| c[t]).collect())
        .collect();
    fit_exceedances(&rows, cond, threshold, u_level)
}

/// Fits the model to rows whose `cond` coordinate already exceeds `threshold`.
pub fn fit_exceedances(rows: &[Vec<f64>], cond: usize, threshold: f64, u_level: f64) -> Result<CondExtFit> {
    if !(threshold > 0.0) {
        return Err(Error::Precondition(format!(
            "conditioning threshold {threshold} must be positive on the Laplace scale"
        )));
    }
    let d = rows.first().map_or(0, Vec::len);
    if cond >= d.max(1) {
        return Err(Error::Argument(format!("conditioning index {cond} out of range")));
    }
    if rows.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData {
            needed: MIN_EXCEEDANCES,
            got: rows.len(),
            context: "conditioning exceedances".into(),
        });
    }
    let mut warnings = Vec::new();
    if rows.len() < RECOMMENDED_EXCEEDANCES {
        warnings.push(format!(
            "only {} conditioning exceedances (recommended at least {RECOMMENDED_EXCEEDANCES})",
            rows.len()
        ));
    }
    let others: Vec<usize> = (0..d).filter(|&j| j != cond).collect();
    let x: Vec<f64> = rows.iter().map(|r| r[cond]).collect();
    let per: Vec<Result<(f64, f64, Option<String>)>> = others
        .par_iter()
        .map(|&j| {
            let y: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            fit_pair(&x, &y, j)
        })
        .collect();
    let mut alpha = Vec::with_capacity(others.len());
    let mut beta = Vec::with_capacity(others.len());
    for r in per {
        let (a, b, w) = r?;
        alpha.push(a);
        beta.push(b);
        warnings.extend(w);
    }
    let residuals: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            others
                .iter()
                .enumerate()
                .map(|(k, &j)| (r[j] - alpha[k] * r[cond]) / r[cond].powf(beta[k]))
                .collect()
        })
        .collect();
    let (mu, sd) = (0..others.len())
        .map(|k| {
            let z: Vec<f64> = residuals.iter().map(|r| r[k]).collect();
            (numeric::mean(&z), numeric::variance(&z).max(0.0).sqrt())
        })
        .unzip();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CondExtFit {
        cond,
        d,
        others,
        alpha,
        beta,
        mu,
        sd,
        u_level,
        threshold,
        residuals,
        warnings,
    })
}

impl CondExtFit {
    /// Rebuilds a full row from a conditioning value and a residual row.
    pub fn reconstruct(&self, wi: f64, z: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.d];
        row[self.cond] = wi;
        for (k, &j) in self.others.iter().enumerate() {
            row[j] = self.alpha[k] * wi + wi.powf(self.beta[k]) * z[k];
        }
        row
    }

    fn check_level(&self, level: f64) -> Result<()> {
        if self.residuals.is_empty() {
            return Err(Error::Precondition("fit holds no residual rows".into()));
        }
        if !(level >= self.threshold) {
            return Err(Error::Precondition(format!(
                "site {}: level {level} lies below the conditioning threshold {}",
                self.cond, self.threshold
            )));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R, level: f64) -> Vec<f64> {
        let e: f64 = Exp1.sample(rng);
        let z = &self.residuals[rng.random_range(0..self.residuals.len())];
        self.reconstruct(level + e, z)
    }
}

/// `n_sim` rows with `W_cond = level + Exp(1)` and residual rows drawn whole
/// from the fit. Chunk `c` of the draws uses the stream `(seed, c)`.
pub fn simulate_conditional(fit: &CondExtFit, n_sim: usize, level: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    fit.check_level(level)?;
    let chunks: Vec<Vec<Vec<f64>>> = (0..n_sim.div_ceil(SIM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = numeric::rng_for(seed, c as u64);
            let len = SIM_CHUNK.min(n_sim - c * SIM_CHUNK);
            (0..len).map(|_| fit.draw(&mut rng, level)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTargets {
    pub group: Vec<usize>,
    /// Laplace-scale levels, one per member of `group`.
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupProbability {
    pub probability: f64,
    /// `Pr(W_cond > s_cond)`.
    pub marginal: f64,
    /// Fraction of simulated rows with every other coordinate above its level.
    pub fraction: f64,
    pub hits: usize,
    pub n_sim: usize,
}

/// `Pr(W_cond > s_cond) · Pr(W_j > s_j ∀j | W_cond > s_cond)`, the second
/// factor estimated from `n_sim` conditional simulations.
pub fn group_exceedance_probability(fit: &CondExtFit, levels: &[f64], n_sim: usize, seed: u64) -> Result<GroupProbability> {
    if levels.len() != fit.d {
        return Err(Error::Argument(format!("expected {} levels, got {}", fit.d, levels.len())));
    }
    if let Some(j) = levels.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("site {j}: level is not finite")));
    }
    let s = levels[fit.cond];
    let marginal = MarginScale::Laplace.survival(s)?;
    if fit.d == 1 {
        return Ok(GroupProbability {
            probability: marginal,
            marginal,
            fraction: 1.0,
            hits: 0,
            n_sim: 0,
        });
    }
    fit.check_level(s)?;
    if n_sim == 0 {
        return Err(Error::Argument("need at least one simulation".into()));
    }
    let hits: usize = (0..n_sim.div_ceil(SIM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = numeric::rng_for(seed, c as u64);
            let len = SIM_CHUNK.min(n_sim - c * SIM_CHUNK);
            (0..len)
                .filter(|_| {
                    let row = fit.draw(&mut rng, s);
                    fit.others.iter().all(|&j| row[j] > levels[j])
                })
                .count()
        })
        .sum();
    let fraction = hits as f64 / n_sim as f64;
    Ok(GroupProbability {
        probability: marginal * fraction,
        marginal,
        fraction,
        hits,
        n_sim,
    })
}

/// Product of per-group probabilities, treating groups as independent.
pub fn factorized_probability(groups: &[f64]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::Argument("no group probabilities".into()));
    }
    for (k, p) in groups.iter().enumerate() {
        log::info!("group {k}: factor {p:e}");
    }
    Ok(groups.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        let (s1, s2) = challenge_levels(&Calendar::default()).unwrap();
        assert!((s1 - 150f64.ln()).abs() < 1e-12);
        assert!((s2 - 12.5f64.ln()).abs() < 1e-12);
        assert_eq!(laplace_level(0.5).unwrap(), 0.0);
        assert!(laplace_level(0.7).is_err());
    }

    #[test]
    fn factor_product() {
        assert!((factorized_probability(&[0.1, 0.2]).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(factorized_probability(&[0.3, 0.0]).unwrap(), 0.0);
        assert!(factorized_probability(&[]).is_err());
    }
}
