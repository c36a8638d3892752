//! Joint tail probabilities along a ray of the simplex through the
//! min-projection `T_ω = min_i Z_i/ω_i` of exponential-margin data, with a
//! covariate-dependent threshold and GPD tail for `T_ω`.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_nonstationary_gpd, FitSpec, Formula, GpdFit, Smoothing, ThresholdSpec};
use crate::dependence::{check_simplex, min_projection};
use crate::error::{Error, Result};
use crate::gpd;
use crate::margins::{self, MarginScale};
use crate::numeric;
use crate::series::Series;

/// Column name given to the min-projection in fitted tables.
pub const PROJECTION: &str = "T";

/// `-ln(1 - e^{-z})`: maps a lower-tail event of an exponential variable to
/// an upper-tail event of another exponential variable. Self-inverse.
pub fn negate_third_margin(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("value must be positive, got {z}")));
    }
    if z > std::f64::consts::LN_2 {
        Ok(-(-(-z).exp()).ln_1p())
    } else {
        Ok(-(-(-z).exp_m1()).ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexRay {
    pub omega: Vec<f64>,
    /// Levels on the exponential scale, after any negation.
    pub levels: Vec<f64>,
    pub radius: f64,
    /// Levels on the original scale.
    pub targets: Vec<f64>,
}

impl SimplexRay {
    /// Ray through exponential-scale levels: `r = Σ levels`, `ω = levels / r`.
    pub fn from_levels(levels: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!("levels {levels:?} must be finite and non-negative")));
        }
        let radius: f64 = levels.iter().sum();
        if !(radius > 0.0) {
            return Err(Error::Domain("levels sum to zero".into()));
        }
        let omega = levels.iter().map(|l| l / radius).collect();
        Ok(SimplexRay {
            omega,
            levels,
            radius,
            targets,
        })
    }
}

/// Rays for `{Y_i > y ∀i}` and `{Y_1 > v, Y_2 > v, Y_3 < m}` with targets
/// on the `margin` scale; the third coordinate of the second event is negated.
pub fn build_challenge_rays(y: f64, v: f64, m: f64, margin: MarginScale) -> Result<(SimplexRay, SimplexRay)> {
    let g = |x: f64| margins::transform(x, margin, MarginScale::Exponential);
    let ey = g(y)?;
    let ev = g(v)?;
    let em = negate_third_margin(g(m)?)?;
    Ok((
        SimplexRay::from_levels(vec![ey; 3], vec![y; 3])?,
        SimplexRay::from_levels(vec![ev, ev, em], vec![v, v, m])?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinProjConfig {
    pub threshold: Formula,
    pub scale: Formula,
    pub smoothing: Smoothing,
    pub fixed_shape: Option<f64>,
    pub min_excesses: usize,
}

impl Default for MinProjConfig {
    fn default() -> Self {
        MinProjConfig {
            threshold: Formula::parse("1 + crs(atmosphere, B=10) + ind(season==2)").expect("valid formula"),
            scale: Formula::parse("1 + crs(atmosphere, B=10)").expect("valid formula"),
            smoothing: Smoothing::default(),
            fixed_shape: None,
            min_excesses: 50,
        }
    }
}

impl MinProjConfig {
    /// Constant threshold, scale and shape.
    pub fn stationary() -> Self {
        MinProjConfig {
            threshold: Formula::intercept(),
            scale: Formula::intercept(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinProjFit {
    pub ray: SimplexRay,
    pub tau: f64,
    pub gpd: GpdFit,
}

impl MinProjFit {
    pub fn shape_ci(&self, level: f64) -> Option<(f64, f64)> {
        self.gpd.shape_ci(level)
    }
}

/// Table of the min-projection alongside the covariates.
pub fn projection_table(z_cols: &[Vec<f64>], covariates: &Series, omega: &[f64]) -> Result<Series> {
    let t = min_projection(z_cols, omega)?;
    if t.len() != covariates.n_rows() {
        return Err(Error::Argument(format!(
            "{} data rows but {} covariate rows",
            t.len(),
            covariates.n_rows()
        )));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("min-projection is not finite; check the margins".into()));
    }
    let mut s = covariates.clone();
    s.set_column(PROJECTION, t)?;
    Ok(s)
}

/// Two-stage fit: log-link quantile-regression threshold for `T_ω` at level
/// `tau`, then a GPD with log-link scale and constant shape on the exceedances.
pub fn fit_minproj(z_cols: &[Vec<f64>], covariates: &Series, ray: &SimplexRay, tau: f64, cfg: &MinProjConfig) -> Result<(MinProjFit, Series)> {
    check_simplex(&ray.omega)?;
    let table = projection_table(z_cols, covariates, &ray.omega)?;
    let threshold = if cfg.threshold.is_intercept_only() {
        ThresholdSpec::Constant { tau }
    } else {
        ThresholdSpec::Quantile {
            formula: cfg.threshold.clone(),
            tau,
        }
    };
    let mut spec = FitSpec::new(PROJECTION, threshold, cfg.scale.clone()).with_smoothing(cfg.smoothing.clone());
    spec.fixed_shape = cfg.fixed_shape;
    spec.min_excesses = cfg.min_excesses;
    let gpd = fit_nonstationary_gpd(&spec, &table)?;
    Ok((
        MinProjFit {
            ray: ray.clone(),
            tau,
            gpd,
        },
        table,
    ))
}

/// `(1-τ)/n Σ_t S(r - v(x_t); σ(x_t), ξ)` over the covariate rows of `table`.
/// Every threshold must lie below `r`.
pub fn joint_survivor_probability(fit: &MinProjFit, table: &Series, r: f64) -> Result<f64> {
    let models = fit.gpd.row_models(table)?;
    let offending: Vec<usize> = models
        .iter()
        .enumerate()
        .filter(|(_, m)| !(r > m.threshold))
        .map(|(t, _)| t)
        .collect();
    if !offending.is_empty() {
        let shown: Vec<String> = offending.iter().take(10).map(ToString::to_string).collect();
        return Err(Error::Precondition(format!(
            "radius {r} does not exceed the threshold at {} rows (first: {})",
            offending.len(),
            shown.join(", ")
        )));
    }
    let parts: Vec<f64> = models
        .par_chunks(4096)
        .map(|c| c.iter().map(|m| gpd::survival_unchecked(r - m.threshold, m.params)).sum())
        .collect();
    let n = models.len() as f64;
    Ok((1.0 - fit.tau) * parts.iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqRow {
    pub theoretical: f64,
    pub empirical: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqTable {
    pub rows: Vec<QqRow>,
    pub band_level: f64,
    pub n_sim: usize,
}

impl QqTable {
    /// Mean absolute difference between empirical and theoretical quantiles.
    pub fn mean_abs_deviation(&self) -> f64 {
        self.rows.iter().map(|r| (r.empirical - r.theoretical).abs()).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn fraction_inside(&self) -> f64 {
        let inside = self.rows.iter().filter(|r| r.empirical >= r.lower && r.empirical <= r.upper).count();
        inside as f64 / self.rows.len().max(1) as f64
    }
}

/// Pointwise band for the ordered values of `n` Exp(1) draws.
pub fn exponential_band(n: usize, n_sim: usize, level: f64, seed: u64) -> Vec<(f64, f64)> {
    let sims: Vec<Vec<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|r| {
            let mut rng = numeric::rng_for(seed, r as u64);
            let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            numeric::sort_floats(&mut v);
            v
        })
        .collect();
    let a = (1.0 - level) / 2.0;
    (0..n)
        .map(|i| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[i]).collect();
            numeric::sort_floats(&mut col);
            (numeric::quantile_sorted(&col, a), numeric::quantile_sorted(&col, 1.0 - a))
        })
        .collect()
}

/// Sorted transformed exceedances against Exp(1) quantiles at `i/(n+1)`,
/// with a simulated pointwise tolerance band.
pub fn minproj_qq(fit: &GpdFit, table: &Series, n_sim: usize, level: f64, seed: u64) -> Result<QqTable> {
    let qq = fit.qq_table(table)?;
    let band = exponential_band(qq.len(), n_sim, level, seed);
    Ok(QqTable {
        rows: qq
            .iter()
            .zip(band)
            .map(|(&(t, e), (lo, hi))| QqRow {
                theoretical: t,
                empirical: e,
                lower: lo,
                upper: hi,
            })
            .collect(),
        band_level: level,
        n_sim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauDiagnostic {
    pub tau: f64,
    pub mean_abs_qq: Option<f64>,
    pub shape: Option<f64>,
    pub n_exceed: usize,
}

/// Fits at each `tau` and picks the one whose QQ plot deviates least (mean
/// absolute deviation); returns the chosen fit and table with the diagnostics.
pub fn select_tau(
    z_cols: &[Vec<f64>],
    covariates: &Series,
    ray: &SimplexRay,
    taus: &[f64],
    cfg: &MinProjConfig,
) -> Result<(MinProjFit, Series, Vec<TauDiagnostic>)> {
    if taus.is_empty() {
        return Err(Error::Argument("empty tau grid".into()));
    }
    let fits: Vec<(f64, Result<(MinProjFit, Series)>)> = taus
        .par_iter()
        .map(|&tau| (tau, fit_minproj(z_cols, covariates, ray, tau, cfg)))
        .collect();
    let mut diags = Vec::with_capacity(fits.len());
    let mut best: Option<(f64, MinProjFit, Series)> = None;
    for (tau, r) in fits {
        match r {
            Ok((fit, table)) => {
                let qq = fit.gpd.qq_table(&table)?;
                let dev = qq.iter().map(|(t, e)| (t - e).abs()).sum::<f64>() / qq.len().max(1) as f64;
                diags.push(TauDiagnostic {
                    tau,
                    mean_abs_qq: Some(dev),
                    shape: Some(fit.gpd.shape),
                    n_exceed: fit.gpd.n_v,
                });
                if best.as_ref().is_none_or(|b| dev < b.0) {
                    best = Some((dev, fit, table));
                }
            }
            Err(e) => {
                log::warn!("tau {tau} skipped: {e}");
                diags.push(TauDiagnostic {
                    tau,
                    mean_abs_qq: None,
                    shape: None,
                    n_exceed: 0,
                });
            }
        }
    }
    let (_, fit, table) = best.ok_or_else(|| Error::Fit("no tau produced a fit".into()))?;
    Ok((fit, table, diags))
}

/// The grid `0.80, 0.81, …, 0.99`.
pub fn default_tau_grid() -> Vec<f64> {
    (80..=99).map(|i| f64::from(i) / 100.0).collect()
}
