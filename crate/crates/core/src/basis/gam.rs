//! Non-stationary GPD tail model: covariate-dependent threshold, per-stratum
//! exceedance rate, log-link scale built from a [`Formula`], constant shape.
//!
//! Coefficients maximize the penalized log-likelihood; smoothing parameters
//! for the spline blocks are chosen on a log grid by blocked k-fold
//! cross-validation of the truncated CRPS.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, DesignSpec};
use super::formula::Formula;
use super::threshold::{self, ThresholdModel};
use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams, SHAPE_MAX, SHAPE_MIN};
use crate::numeric;
use crate::optim::{self, BfgsOptions};
use crate::scoring;
use crate::series::{CaseDeletion, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// Sample quantile of the whole response.
    Constant { tau: f64 },
    /// Per-level sample quantiles of `var`.
    Stepped { var: String, tau: f64 },
    /// Log-link quantile regression.
    Quantile { formula: Formula, tau: f64 },
    /// Use this threshold as is.
    Fixed { model: ThresholdModel },
}

impl ThresholdSpec {
    pub fn tau(&self) -> Option<f64> {
        match self {
            ThresholdSpec::Constant { tau } | ThresholdSpec::Stepped { tau, .. } | ThresholdSpec::Quantile { tau, .. } => {
                Some(*tau)
            }
            ThresholdSpec::Fixed { .. } => None,
        }
    }

    /// Same kind of threshold at another quantile level.
    pub fn with_tau(&self, tau: f64) -> ThresholdSpec {
        match self {
            ThresholdSpec::Constant { .. } => ThresholdSpec::Constant { tau },
            ThresholdSpec::Stepped { var, .. } => ThresholdSpec::Stepped { var: var.clone(), tau },
            ThresholdSpec::Quantile { formula, .. } => ThresholdSpec::Quantile {
                formula: formula.clone(),
                tau,
            },
            ThresholdSpec::Fixed { model } => ThresholdSpec::Fixed { model: model.clone() },
        }
    }

    fn variables(&self) -> Vec<String> {
        match self {
            ThresholdSpec::Constant { .. } => Vec::new(),
            ThresholdSpec::Stepped { var, .. } => vec![var.clone()],
            ThresholdSpec::Quantile { formula, .. } => formula.variables().into_iter().map(String::from).collect(),
            ThresholdSpec::Fixed { model } => model.variables(),
        }
    }

    pub fn resolve(&self, data: &Series, response: &str) -> Result<ThresholdModel> {
        match self {
            ThresholdSpec::Constant { tau } => threshold::constant_threshold(data, response, *tau),
            ThresholdSpec::Stepped { var, tau } => threshold::stepped_threshold(data, response, var, *tau),
            ThresholdSpec::Quantile { formula, tau } => threshold::fit_threshold_quantile(formula, data, response, *tau),
            ThresholdSpec::Fixed { model } => Ok(model.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothing {
    /// One smoothing parameter per spline block, or a single value shared by all.
    Fixed { lambdas: Vec<f64> },
    /// Coordinate-wise search over `grid` scored by `folds`-fold CV.
    Grid { grid: Vec<f64>, folds: usize },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Grid {
            grid: (0..7).map(|i| 10f64.powi(i - 5)).collect(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub response: String,
    pub threshold: ThresholdSpec,
    /// Variable whose levels define rate strata; defaults to the stepped
    /// threshold variable when unset.
    pub strata: Option<String>,
    pub scale: Formula,
    pub smoothing: Smoothing,
    /// Pins the shape instead of estimating it.
    pub fixed_shape: Option<f64>,
    pub min_excesses: usize,
    pub ridge: f64,
}

impl FitSpec {
    pub fn new(response: &str, threshold: ThresholdSpec, scale: Formula) -> Self {
        FitSpec {
            response: response.to_string(),
            threshold,
            strata: None,
            scale,
            smoothing: Smoothing::default(),
            fixed_shape: None,
            min_excesses: 50,
            ridge: 1e-3,
        }
    }

    /// Constant threshold at level `tau`, constant scale and shape.
    pub fn stationary(response: &str, tau: f64) -> Self {
        FitSpec::new(response, ThresholdSpec::Constant { tau }, Formula::intercept())
    }

    pub fn with_strata(mut self, var: &str) -> Self {
        self.strata = Some(var.to_string());
        self
    }

    pub fn with_smoothing(mut self, s: Smoothing) -> Self {
        self.smoothing = s;
        self
    }

    pub fn with_fixed_shape(mut self, shape: f64) -> Self {
        self.fixed_shape = Some(shape);
        self
    }

    pub fn strata_var(&self) -> Option<String> {
        self.strata.clone().or_else(|| match &self.threshold {
            ThresholdSpec::Stepped { var, .. } => Some(var.clone()),
            _ => None,
        })
    }

    /// Every variable the fit needs present, response first.
    pub fn variables(&self) -> Vec<String> {
        let mut vars = vec![self.response.clone()];
        let extra = self
            .threshold
            .variables()
            .into_iter()
            .chain(self.scale.variables().into_iter().map(String::from))
            .chain(self.strata_var());
        for v in extra {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumInfo {
    /// Level of the strata variable, `None` for the single-stratum case.
    pub level: Option<f64>,
    pub n: usize,
    pub n_exceed: usize,
    /// Empirical exceedance probability.
    pub rate: f64,
    /// Sorted non-positive deficits `y - v(x)` of the non-exceedances.
    #[serde(skip)]
    pub body: Vec<f64>,
}

impl StratumInfo {
    fn body_scale(&self) -> f64 {
        let m = self.body.len().max(1) as f64;
        (-self.body.first().copied().unwrap_or(0.0) / m).max(1e-12)
    }

    /// Body CDF of the deficit `d = y - v(x)`, reaching 1 at `d = 0`:
    /// linear through `(d_(i), i/(m+1))` and `(0, 1)`, exponential below the minimum.
    pub fn body_cdf(&self, d: f64) -> f64 {
        let m = self.body.len();
        if d >= 0.0 {
            return 1.0;
        }
        if m == 0 {
            return 0.0;
        }
        let mp1 = (m + 1) as f64;
        let c = self.body.partition_point(|&t| t <= d);
        if c == 0 {
            return ((d - self.body[0]) / self.body_scale()).exp() / mp1;
        }
        let (x0, p0) = (self.body[c - 1], c as f64 / mp1);
        let (x1, p1) = if c == m { (0.0, 1.0) } else { (self.body[c], (c + 1) as f64 / mp1) };
        if x1 <= x0 {
            return p1;
        }
        p0 + (p1 - p0) * (d - x0) / (x1 - x0)
    }

    /// Inverse of [`StratumInfo::body_cdf`] for `u ∈ (0, 1]`.
    pub fn body_quantile(&self, u: f64) -> f64 {
        let m = self.body.len();
        if m == 0 || u >= 1.0 {
            return 0.0;
        }
        let mp1 = (m + 1) as f64;
        let k = u * mp1;
        if k <= 1.0 {
            return self.body[0] + self.body_scale() * k.max(1e-300).ln();
        }
        let i = (k.floor() as usize).min(m);
        let frac = k - i as f64;
        let x0 = self.body[i - 1];
        let x1 = if i == m { 0.0 } else { self.body[i] };
        x0 + frac * (x1 - x0)
    }
}

/// Threshold, rate and GPD parameters at one covariate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowModel {
    pub threshold: f64,
    pub rate: f64,
    pub params: GpdParams,
    pub stratum: usize,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPoint {
    pub lambdas: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GpdFit {
    pub response: String,
    pub threshold: ThresholdModel,
    pub tau: Option<f64>,
    pub strata_var: Option<String>,
    pub strata: Vec<StratumInfo>,
    #[serde(skip)]
    pub scale_spec: DesignSpec,
    pub scale_formula: String,
    pub scale_coef: Vec<f64>,
    pub shape: f64,
    pub shape_fixed: bool,
    pub lambdas: Vec<f64>,
    pub ridge: f64,
    pub cv: Vec<CvPoint>,
    pub log_likelihood: f64,
    pub edf: f64,
    pub n: usize,
    pub n_v: usize,
    /// Row-major covariance of `(β, ξ)` (or `β` when the shape is fixed).
    pub covariance: Vec<f64>,
    pub case_deletion: CaseDeletion,
    pub warnings: Vec<String>,
}

/// Penalized likelihood of the excesses for a fixed design and penalty.
#[derive(Debug, Clone)]
pub struct TailProblem {
    pub x: DesignMatrix,
    pub z: Vec<f64>,
    pub penalty: Vec<f64>,
    pub fixed_shape: Option<f64>,
}

impl TailProblem {
    pub fn n_params(&self) -> usize {
        self.x.n_cols + usize::from(self.fixed_shape.is_none())
    }

    fn shape_of(&self, theta: &[f64]) -> f64 {
        self.fixed_shape.unwrap_or_else(|| theta[self.x.n_cols])
    }

    /// Mean negative log-likelihood and gradient in `θ = (β, ξ)`.
    pub fn nll(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.nll_rows(theta, None)
    }

    fn nll_rows(&self, theta: &[f64], rows: Option<&[usize]>) -> (f64, Vec<f64>) {
        let p = self.x.n_cols;
        let q = self.n_params();
        let xi = self.shape_of(theta);
        let mut g = vec![0.0; q];
        if !(xi > SHAPE_MIN && xi <= SHAPE_MAX) {
            return (f64::INFINITY, g);
        }
        let mut f = 0.0;
        let mut count = 0usize;
        let mut visit = |i: usize| -> bool {
            let row = self.x.row(i);
            let eta: f64 = row.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
            match gpd::log_density_grad(self.z[i], eta, xi) {
                Some((ll, d_eta, d_xi)) => {
                    f -= ll;
                    for (gj, xj) in g[..p].iter_mut().zip(row) {
                        *gj -= d_eta * xj;
                    }
                    if q > p {
                        g[p] -= d_xi;
                    }
                    count += 1;
                    true
                }
                None => false,
            }
        };
        let ok = match rows {
            Some(rs) => rs.iter().all(|&i| visit(i)),
            None => (0..self.z.len()).all(&mut visit),
        };
        if !ok || count == 0 {
            return (f64::INFINITY, vec![0.0; q]);
        }
        let nf = count as f64;
        g.iter_mut().for_each(|v| *v /= nf);
        (f / nf, g)
    }

    fn add_penalty(&self, theta: &[f64], f: &mut f64, g: &mut [f64]) {
        let p = self.x.n_cols;
        for i in 0..p {
            let pb: f64 = (0..p).map(|j| self.penalty[i * p + j] * theta[j]).sum();
            *f += 0.5 * theta[i] * pb;
            g[i] += pb;
        }
    }

    /// Mean negative log-likelihood plus `½ βᵀ P β`.
    pub fn objective(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (mut f, mut g) = self.nll(theta);
        if f.is_finite() {
            self.add_penalty(theta, &mut f, &mut g);
        }
        (f, g)
    }

    fn objective_rows(&self, theta: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
        let (mut f, mut g) = self.nll_rows(theta, Some(rows));
        if f.is_finite() {
            self.add_penalty(theta, &mut f, &mut g);
        }
        (f, g)
    }

    /// GPD parameters of excess `i` under `θ`.
    pub fn params(&self, theta: &[f64], i: usize) -> GpdParams {
        let p = self.x.n_cols;
        let eta: f64 = self.x.row(i).iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
        GpdParams {
            scale: eta.exp(),
            shape: self.shape_of(theta),
        }
    }

    /// Minimizes the penalized objective on `rows` (all rows when `None`).
    pub fn minimize(&self, start: &[f64], rows: Option<&[usize]>) -> Result<Vec<f64>> {
        let opts = BfgsOptions {
            max_iter: 3000,
            grad_tol: 1e-9,
            f_tol: 1e-15,
            max_step: 1.0,
        };
        let res = match rows {
            Some(rs) => optim::bfgs(|t| self.objective_rows(t, rs), start, opts),
            None => optim::bfgs(|t| self.objective(t), start, opts),
        };
        if !res.value.is_finite() {
            return Err(Error::Fit("penalized GPD likelihood is infinite at the start point".into()));
        }
        if !res.converged && res.grad_norm > 1e-5 {
            return Err(Error::Fit(format!(
                "penalized GPD likelihood did not converge after {} iterations (gradient norm {:.3e})",
                res.iterations, res.grad_norm
            )));
        }
        Ok(res.x)
    }

    /// Hessian of the mean negative log-likelihood (unpenalized).
    fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let h = optim::hessian_from_gradient(|t| self.nll(t).1, theta, 1e-5);
        let q = theta.len();
        DMatrix::from_fn(q, q, |i, j| h[i][j])
    }

    fn penalty_full(&self) -> DMatrix<f64> {
        let p = self.x.n_cols;
        let q = self.n_params();
        DMatrix::from_fn(q, q, |i, j| if i < p && j < p { self.penalty[i * p + j] } else { 0.0 })
    }

    /// Effective degrees of freedom `tr((H + P)⁻¹ H)` and the covariance
    /// `((H + P) n)⁻¹`, both at `θ`.
    pub fn edf_and_covariance(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let h = self.hessian(theta);
        let hp = &h + self.penalty_full();
        let q = theta.len();
        match hp.clone().try_inverse() {
            Some(inv) => {
                let edf = (&inv * &h).trace();
                let n = self.z.len() as f64;
                let cov: Vec<f64> = (0..q * q).map(|k| inv[(k / q, k % q)] / n).collect();
                (edf, cov)
            }
            None => (q as f64, vec![f64::NAN; q * q]),
        }
    }
}

impl GpdFit {
    pub fn aic(&self) -> f64 {
        scoring::aic(self.log_likelihood, self.edf)
    }

    pub fn bic(&self) -> f64 {
        scoring::bic(self.log_likelihood, self.edf, self.n_v)
    }

    fn n_params(&self) -> usize {
        self.scale_coef.len() + usize::from(!self.shape_fixed)
    }

    /// Coefficient vector `(β, ξ)` (or `β` with a fixed shape).
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.scale_coef.clone();
        if !self.shape_fixed {
            t.push(self.shape);
        }
        t
    }

    pub fn shape_se(&self) -> Option<f64> {
        if self.shape_fixed {
            return None;
        }
        let q = self.n_params();
        let v = self.covariance[q * q - 1];
        (v >= 0.0).then(|| v.sqrt())
    }

    /// Normal-approximation interval for the shape.
    pub fn shape_ci(&self, level: f64) -> Option<(f64, f64)> {
        let se = self.shape_se()?;
        let z = numeric::norm_quantile(0.5 + level / 2.0);
        Some((self.shape - z * se, self.shape + z * se))
    }

    pub fn stratum_index(&self, data: &Series, row: usize) -> Result<usize> {
        match &self.strata_var {
            None => Ok(0),
            Some(var) => {
                let x = data.value(var, row)?;
                self.strata
                    .iter()
                    .position(|s| s.level == Some(x))
                    .ok_or_else(|| Error::Domain(format!("no stratum for {var} = {x}")))
            }
        }
    }

    pub fn row_model(&self, data: &Series, row: usize) -> Result<RowModel> {
        let (threshold, c1) = self.threshold.value_at(data, row)?;
        let (basis, c2) = self.scale_spec.eval_row(data, row)?;
        let eta: f64 = basis.iter().zip(&self.scale_coef).map(|(a, b)| a * b).sum();
        let stratum = self.stratum_index(data, row)?;
        Ok(RowModel {
            threshold,
            rate: self.strata[stratum].rate,
            params: GpdParams {
                scale: eta.exp(),
                shape: self.shape,
            },
            stratum,
            clamped: c1 || c2,
        })
    }

    /// Row models for every row of `data`; logs a warning when covariates
    /// fall outside the spline training range.
    pub fn row_models(&self, data: &Series) -> Result<Vec<RowModel>> {
        let rows: Vec<RowModel> = (0..data.n_rows()).map(|r| self.row_model(data, r)).collect::<Result<_>>()?;
        let clamped = rows.iter().filter(|m| m.clamped).count();
        if clamped > 0 {
            log::warn!("{clamped} covariate rows lie outside the training range and were clamped");
        }
        Ok(rows)
    }

    pub fn conditional_cdf(&self, y: f64, data: &Series, row: usize) -> Result<f64> {
        Ok(self.cdf_at(y, &self.row_model(data, row)?))
    }

    pub fn cdf_at(&self, y: f64, m: &RowModel) -> f64 {
        1.0 - self.survival_at(y, m)
    }

    /// `1 - F(y | x)`, accurate in the far tail.
    pub fn survival_at(&self, y: f64, m: &RowModel) -> f64 {
        let z = y - m.threshold;
        if z >= 0.0 {
            m.rate * gpd::survival_unchecked(z, m.params)
        } else {
            1.0 - (1.0 - m.rate) * self.strata[m.stratum].body_cdf(z)
        }
    }

    pub fn conditional_quantile(&self, prob: f64, data: &Series, row: usize) -> Result<f64> {
        if !(0.0..1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0,1)")));
        }
        Ok(self.quantile_at(prob, &self.row_model(data, row)?))
    }

    pub fn quantile_at(&self, prob: f64, m: &RowModel) -> f64 {
        if m.rate > 0.0 && prob >= 1.0 - m.rate {
            m.threshold + gpd::upper_quantile((1.0 - prob) / m.rate, m.params)
        } else {
            m.threshold + self.strata[m.stratum].body_quantile(prob / (1.0 - m.rate))
        }
    }

    /// `(row, excess)` for every row with `y > v(x)`; rows with missing
    /// fit variables are skipped.
    pub fn exceedances(&self, data: &Series) -> Result<Vec<(usize, f64)>> {
        let y = data.column(&self.response)?;
        let scale_cols = self
            .scale_spec
            .formula()
            .variables()
            .into_iter()
            .map(|v| data.column(v))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for r in 0..data.n_rows() {
            if y[r].is_nan() || scale_cols.iter().any(|c| c[r].is_nan()) {
                continue;
            }
            let v = match self.threshold.value_at(data, r) {
                Ok((v, _)) => v,
                Err(Error::Precondition(_)) => continue,
                Err(e) => return Err(e),
            };
            if y[r] > v {
                out.push((r, y[r] - v));
            }
        }
        Ok(out)
    }

    /// `-ln S(y_t - v(x_t); σ(x_t), ξ)` over the exceedances, in row order.
    pub fn transform_excesses_to_exponential(&self, data: &Series) -> Result<Vec<f64>> {
        self.exceedances(data)?
            .into_iter()
            .map(|(r, z)| {
                let m = self.row_model(data, r)?;
                Ok(-gpd::log_survival_unchecked(z, m.params))
            })
            .collect()
    }

    /// QQ table: Exp(1) quantiles at `i/(n_v+1)` against sorted transformed excesses.
    pub fn qq_table(&self, data: &Series) -> Result<Vec<(f64, f64)>> {
        let e = numeric::sorted(&self.transform_excesses_to_exponential(data)?);
        let n = e.len() as f64;
        Ok(e.iter()
            .enumerate()
            .map(|(i, &v)| (-(1.0 - (i + 1) as f64 / (n + 1.0)).ln(), v))
            .collect())
    }

    /// Rebuilds the penalized problem on the exceedances of `data` with the
    /// stored basis and smoothing parameters.
    pub fn problem(&self, data: &Series) -> Result<TailProblem> {
        let ex = self.exceedances(data)?;
        let rows: Vec<usize> = ex.iter().map(|e| e.0).collect();
        let ex_data = data.select_rows(&rows);
        let x = self.scale_spec.build(&ex_data)?;
        let penalty = self.scale_spec.penalty_matrix(&x, &self.lambdas, self.ridge)?;
        Ok(TailProblem {
            x,
            z: ex.iter().map(|e| e.1).collect(),
            penalty,
            fixed_shape: self.shape_fixed.then_some(self.shape),
        })
    }

    /// Same fit with coefficients replaced by `theta`; likelihood, degrees
    /// of freedom and covariance are recomputed on `problem`.
    pub fn with_theta(&self, problem: &TailProblem, theta: &[f64]) -> GpdFit {
        let mut out = self.clone();
        let p = problem.x.n_cols;
        out.scale_coef = theta[..p].to_vec();
        if !self.shape_fixed {
            out.shape = theta[p];
        }
        let (nll, _) = problem.nll(theta);
        out.log_likelihood = -nll * problem.z.len() as f64;
        let (edf, cov) = problem.edf_and_covariance(theta);
        out.edf = edf;
        out.covariance = cov;
        out
    }
}

/// Blocked fold assignment: `k` contiguous chunks of `0..n`.
pub fn blocked_folds(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k).map(|f| (f * n / k..(f + 1) * n / k).collect()).collect()
}

fn cv_score(problem: &TailProblem, folds: &[Vec<usize>], start: &[f64]) -> f64 {
    let n = problem.z.len();
    let mut total = 0.0;
    let mut count = 0usize;
    for fold in folds {
        if fold.is_empty() {
            continue;
        }
        let mut held = vec![false; n];
        fold.iter().for_each(|&i| held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let Ok(theta) = problem.minimize(start, Some(&train)) else {
            return f64::INFINITY;
        };
        for &i in fold {
            let p = problem.params(&theta, i);
            total += scoring::gpd_crps_truncated(problem.z[i], p, scoring::crps_upper(p));
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        total / count as f64
    }
}

fn problem_for(spec: &DesignSpec, x: &DesignMatrix, z: &[f64], lambdas: &[f64], ridge: f64, fixed_shape: Option<f64>) -> Result<TailProblem> {
    Ok(TailProblem {
        x: x.clone(),
        z: z.to_vec(),
        penalty: spec.penalty_matrix(x, lambdas, ridge)?,
        fixed_shape,
    })
}

/// Fits the non-stationary GPD described by `spec` to `data`.
pub fn fit_nonstationary_gpd(spec: &FitSpec, data: &Series) -> Result<GpdFit> {
    let vars = spec.variables();
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let (data, deletion) = data.complete_cases(&var_refs)?;
    let mut warnings = Vec::new();
    if deletion.dropped > 0 {
        warnings.push(format!(
            "case deletion removed {} of {} rows ({:.1}%)",
            deletion.dropped,
            deletion.dropped + deletion.retained,
            100.0 * deletion.dropped_fraction
        ));
    }
    let threshold = spec.threshold.resolve(&data, &spec.response)?;
    let v = threshold.values(&data)?;
    let y = data.column(&spec.response)?;
    let n = y.len();

    let strata_var = spec.strata_var();
    let stratum_of: Vec<Option<f64>> = match &strata_var {
        Some(var) => data.column(var)?.iter().map(|&s| Some(s)).collect(),
        None => vec![None; n],
    };
    let mut levels: Vec<f64> = stratum_of.iter().flatten().copied().collect();
    numeric::sort_floats(&mut levels);
    levels.dedup();
    let level_list: Vec<Option<f64>> = if strata_var.is_some() {
        levels.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut strata = Vec::with_capacity(level_list.len());
    for level in level_list {
        let rows: Vec<usize> = (0..n).filter(|&r| stratum_of[r] == level).collect();
        let n_exceed = rows.iter().filter(|&&r| y[r] > v[r]).count();
        let body = numeric::sorted(&rows.iter().filter(|&&r| y[r] <= v[r]).map(|&r| y[r] - v[r]).collect::<Vec<_>>());
        if n_exceed == 0 {
            warnings.push(format!("stratum {level:?} has no threshold exceedances"));
        } else if n_exceed == rows.len() {
            warnings.push(format!("stratum {level:?} lies entirely above the threshold"));
        }
        strata.push(StratumInfo {
            level,
            n: rows.len(),
            n_exceed,
            rate: n_exceed as f64 / rows.len().max(1) as f64,
            body,
        });
    }

    let ex_rows: Vec<usize> = (0..n).filter(|&r| y[r] > v[r]).collect();
    let n_v = ex_rows.len();
    if n_v < spec.min_excesses.max(2) {
        return Err(Error::InsufficientData {
            needed: spec.min_excesses.max(2),
            got: n_v,
            context: "threshold exceedances".into(),
        });
    }
    let z: Vec<f64> = ex_rows.iter().map(|&r| y[r] - v[r]).collect();
    let ex_data = data.select_rows(&ex_rows);
    let scale_spec = DesignSpec::fit(&spec.scale, &ex_data)?;
    let x = scale_spec.build(&ex_data)?;
    let n_blocks = scale_spec.penalty_blocks().len();

    // stationary start
    let start = match spec.fixed_shape {
        Some(xi) => {
            let sigma = if xi < 1.0 { numeric::mean(&z) * (1.0 - xi) } else { numeric::mean(&z) };
            scale_spec.constant_coefficients(sigma.max(1e-12).ln())
        }
        None => {
            let base = gpd::fit_mle_with(
                &z,
                gpd::GpdFitOptions {
                    min_excesses: 2,
                    ..Default::default()
                },
            )?;
            let mut s = scale_spec.constant_coefficients(base.params.scale.ln());
            s.push(base.params.shape.clamp(SHAPE_MIN + 0.05, SHAPE_MAX - 0.05));
            s
        }
    };

    let mut cv = Vec::new();
    let lambdas = match &spec.smoothing {
        Smoothing::Fixed { lambdas } if lambdas.len() == 1 => vec![lambdas[0]; n_blocks],
        Smoothing::Fixed { lambdas } => lambdas.clone(),
        Smoothing::Grid { .. } if n_blocks == 0 => Vec::new(),
        Smoothing::Grid { grid, folds } => {
            if grid.is_empty() {
                return Err(Error::Argument("empty smoothing grid".into()));
            }
            if *folds < 2 || *folds > n_v {
                return Err(Error::Argument(format!("fold count {folds} outside [2, {n_v}]")));
            }
            let fold_rows = blocked_folds(n_v, *folds);
            let mid = grid[grid.len() / 2];
            let mut current = vec![mid; n_blocks];
            let passes = if n_blocks > 1 { 2 } else { 1 };
            for _ in 0..passes {
                for b in 0..n_blocks {
                    let scored: Vec<(f64, f64)> = grid
                        .par_iter()
                        .map(|&lam| {
                            let mut l = current.clone();
                            l[b] = lam;
                            let s = problem_for(&scale_spec, &x, &z, &l, spec.ridge, spec.fixed_shape)
                                .map(|pr| cv_score(&pr, &fold_rows, &start))
                                .unwrap_or(f64::INFINITY);
                            (lam, s)
                        })
                        .collect();
                    for &(lam, s) in &scored {
                        let mut l = current.clone();
                        l[b] = lam;
                        cv.push(CvPoint { lambdas: l, score: s });
                    }
                    let best = scored
                        .iter()
                        .filter(|s| s.1.is_finite())
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .ok_or_else(|| Error::Fit("every smoothing candidate failed in cross-validation".into()))?;
                    current[b] = best.0;
                }
            }
            current
        }
    };

    let problem = problem_for(&scale_spec, &x, &z, &lambdas, spec.ridge, spec.fixed_shape)?;
    let theta = problem.minimize(&start, None)?;
    let p = x.n_cols;
    if x.clamped_rows > 0 {
        warnings.push(format!("{} rows clamped to the spline range", x.clamped_rows));
    }
    let fit = GpdFit {
        response: spec.response.clone(),
        threshold,
        tau: spec.threshold.tau(),
        strata_var,
        strata,
        scale_formula: spec.scale.to_string(),
        scale_spec,
        scale_coef: theta[..p].to_vec(),
        shape: spec.fixed_shape.unwrap_or(theta[p.min(theta.len() - 1)]),
        shape_fixed: spec.fixed_shape.is_some(),
        lambdas,
        ridge: spec.ridge,
        cv,
        log_likelihood: 0.0,
        edf: 0.0,
        n,
        n_v,
        covariance: Vec::new(),
        case_deletion: deletion,
        warnings,
    };
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    Ok(fit.with_theta(&problem, &theta))
}
