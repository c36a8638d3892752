//! Known-truth generators: a univariate response with a covariate-dependent
//! GPD tail, triples with a chosen dependence structure, and 50-variable
//! rows made of mutually independent groups. Each generator
//! is deterministic in its seed and returns a truth record.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams};
use crate::margins::{self, MarginScale};
use crate::numeric;
use crate::reference;
use crate::series::{Calendar, Series};

/// Gaussian AR(1) with unit marginal variance.
pub fn ar1<R: Rng>(n: usize, phi: f64, rng: &mut R) -> Vec<f64> {
    let innov = (1.0 - phi * phi).max(0.0).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x: f64 = rng.sample(StandardNormal);
    for _ in 0..n {
        out.push(x);
        let e: f64 = rng.sample(StandardNormal);
        x = phi * x + innov * e;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateMargin {
    Gaussian { mean: f64, sd: f64 },
    /// Uniform on `(lo, hi)` via the normal CDF of the latent AR(1).
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub phi: f64,
    pub margin: CovariateMargin,
    /// Constant within each calendar month, AR(1) across months.
    #[serde(default)]
    pub monthly: bool,
}

impl CovariateSpec {
    fn generate<R: Rng>(&self, n: usize, cal: &Calendar, rng: &mut R) -> Vec<f64> {
        let latent = if self.monthly {
            let months = n.div_ceil(cal.days_per_month);
            let m = ar1(months, self.phi, rng);
            (0..n).map(|t| m[t / cal.days_per_month]).collect()
        } else {
            ar1(n, self.phi, rng)
        };
        latent
            .into_iter()
            .map(|z| match self.margin {
                CovariateMargin::Gaussian { mean, sd } => mean + sd * z,
                CovariateMargin::Uniform { lo, hi } => lo + (hi - lo) * numeric::norm_cdf(z),
            })
            .collect()
    }
}

/// `log σ(x) = intercept + Σ b·x + Σ a·sin(2πx) + season2·1{season = 2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogScale {
    pub intercept: f64,
    #[serde(default)]
    pub linear: Vec<(String, f64)>,
    #[serde(default)]
    pub sine: Vec<(String, f64)>,
    #[serde(default)]
    pub season2: f64,
}

impl LogScale {
    pub fn eval(&self, data: &Series, row: usize) -> Result<f64> {
        let mut s = self.intercept;
        for (v, b) in &self.linear {
            s += b * data.value(v, row)?;
        }
        for (v, a) in &self.sine {
            s += a * (2.0 * PI * data.value(v, row)?).sin();
        }
        if self.season2 != 0.0 && data.value("season", row)? == 2.0 {
            s += self.season2;
        }
        Ok(s)
    }

    fn variables(&self) -> Vec<&str> {
        self.linear.iter().chain(&self.sine).map(|(v, _)| v.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnivariateConfig {
    pub n: usize,
    pub calendar: Calendar,
    pub covariates: Vec<CovariateSpec>,
    pub log_scale: LogScale,
    pub shape: f64,
    /// True threshold per season (index 0 is season 1).
    pub thresholds: Vec<f64>,
    /// Probability of exceeding the threshold, per season.
    pub tail_prob: Vec<f64>,
    /// The body lives on `[threshold - body_width, threshold]`.
    pub body_width: f64,
    /// Fraction of rows with one covariate missing completely at random.
    pub missing: f64,
    pub response: String,
}

impl Default for UnivariateConfig {
    fn default() -> Self {
        let g = |name: &str, phi, mean, sd| CovariateSpec {
            name: name.into(),
            phi,
            margin: CovariateMargin::Gaussian { mean, sd },
            monthly: false,
        };
        UnivariateConfig {
            n: 21_000,
            calendar: Calendar::default(),
            covariates: vec![
                g("V1", 0.1, 0.0, 1.0),
                CovariateSpec {
                    name: "V2".into(),
                    phi: 0.1,
                    margin: CovariateMargin::Uniform { lo: 0.0, hi: 1.0 },
                    monthly: false,
                },
                g("V3", 0.1, 0.0, 1.0),
                g("V4", 0.1, 0.0, 1.0),
                g("V6", 0.8, 5.0, 1.5),
                CovariateSpec {
                    name: "V7".into(),
                    phi: 0.8,
                    margin: CovariateMargin::Uniform { lo: 0.0, hi: 2.0 * PI },
                    monthly: false,
                },
                CovariateSpec {
                    name: "V8".into(),
                    phi: 0.5,
                    margin: CovariateMargin::Gaussian { mean: 0.0, sd: 1.0 },
                    monthly: true,
                },
            ],
            log_scale: LogScale {
                intercept: 1.5,
                linear: vec![("V3".into(), 0.2), ("V6".into(), 0.05)],
                sine: vec![("V2".into(), 0.3)],
                season2: 0.25,
            },
            shape: 0.05,
            thresholds: vec![40.0, 45.0],
            tail_prob: vec![0.2, 0.2],
            body_width: 30.0,
            missing: 0.117,
            response: "Y".into(),
        }
    }
}

impl UnivariateConfig {
    /// One season, one uniform covariate `x`, `σ(x) = exp(1 + 0.5 sin 2πx)`.
    pub fn smooth_scale(n: usize, shape: f64) -> Self {
        UnivariateConfig {
            n,
            covariates: vec![CovariateSpec {
                name: "x".into(),
                phi: 0.0,
                margin: CovariateMargin::Uniform { lo: 0.0, hi: 1.0 },
                monthly: false,
            }],
            log_scale: LogScale {
                intercept: 1.0,
                linear: vec![],
                sine: vec![("x".into(), 0.5)],
                season2: 0.0,
            },
            shape,
            thresholds: vec![10.0, 10.0],
            tail_prob: vec![0.2, 0.2],
            body_width: 10.0,
            missing: 0.0,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.thresholds.len() != 2 || self.tail_prob.len() != 2 {
            return Err(Error::Argument("thresholds and tail_prob need one value per season".into()));
        }
        if self.tail_prob.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Argument("tail probabilities must lie in (0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.missing) {
            return Err(Error::Argument(format!("missing fraction {} outside [0,1)", self.missing)));
        }
        if !(self.body_width > 0.0) {
            return Err(Error::Argument("body width must be positive".into()));
        }
        GpdParams::new(1.0, self.shape)?;
        Ok(())
    }

    /// True conditional tail at `row`: (threshold, exceedance probability, GPD).
    pub fn truth_at(&self, data: &Series, row: usize) -> Result<(f64, f64, GpdParams)> {
        let s = data.value("season", row)? as usize;
        let k = s.clamp(1, 2) - 1;
        let scale = self.log_scale.eval(data, row)?.exp();
        Ok((self.thresholds[k], self.tail_prob[k], GpdParams::new(scale, self.shape)?))
    }

    /// True conditional quantile for a probability in the tail.
    pub fn true_quantile(&self, prob: f64, data: &Series, row: usize) -> Result<f64> {
        let (v, zeta, p) = self.truth_at(data, row)?;
        if prob < 1.0 - zeta {
            return Err(Error::Domain(format!("probability {prob} lies in the body")));
        }
        Ok(v + gpd::upper_quantile((1.0 - prob) / zeta, p))
    }
}

fn body_draw<R: Rng>(rng: &mut R) -> f64 {
    // Beta(2, 2): density vanishes at both ends of the body
    let u: f64 = rng.random();
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid * mid * (3.0 - 2.0 * mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Response with a bounded body and an exact GPD tail above a per-season
/// threshold; covariates follow AR(1) processes and calendar columns are added.
pub fn gen_univariate(cfg: &UnivariateConfig, seed: u64) -> Result<Series> {
    cfg.validate()?;
    let mut rng = numeric::rng_for(seed, 0);
    let n = cfg.n;
    let mut data = Series::from_columns(vec![(cfg.response.clone(), vec![0.0; n])])?.with_calendar(&cfg.calendar)?;
    for c in &cfg.covariates {
        data.set_column(c.name.clone(), c.generate(n, &cfg.calendar, &mut rng))?;
    }
    for v in cfg.log_scale.variables() {
        if !data.has_column(v) {
            return Err(Error::Schema(v.to_string()));
        }
    }
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let (v, zeta, p) = cfg.truth_at(&data, r)?;
        if rng.random::<f64>() < zeta {
            y.push(v + gpd::sample(&mut rng, p));
        } else {
            y.push(v - cfg.body_width * body_draw(&mut rng));
        }
    }
    data.set_column(cfg.response.clone(), y)?;
    if cfg.missing > 0.0 && !cfg.covariates.is_empty() {
        let mut cols: Vec<Vec<f64>> = cfg
            .covariates
            .iter()
            .map(|c| data.column(&c.name).map(<[f64]>::to_vec))
            .collect::<Result<_>>()?;
        for r in 0..n {
            if rng.random::<f64>() < cfg.missing {
                let k = rng.random_range(0..cols.len());
                cols[k][r] = f64::NAN;
            }
        }
        for (c, col) in cfg.covariates.iter().zip(cols) {
            data.set_column(c.name.clone(), col)?;
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Copula {
    Independent,
    Comonotone,
    /// Equicorrelated Gaussian; `rho + rho_atmosphere·atmosphere`, clipped to `[0, 0.99]`.
    Gaussian { rho: f64, rho_atmosphere: f64 },
    /// Symmetric logistic with dependence `alpha ∈ (0, 1]` (1 is independence).
    Logistic { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrivariateConfig {
    pub n: usize,
    pub calendar: Calendar,
    pub copula: Copula,
    /// AR(1) coefficient of the monthly atmosphere process.
    pub atmosphere_phi: f64,
    /// Margin of the written `Y` columns.
    pub margin: MarginScale,
}

impl Default for TrivariateConfig {
    fn default() -> Self {
        TrivariateConfig {
            n: 21_000,
            calendar: Calendar::default(),
            copula: Copula::Independent,
            atmosphere_phi: 0.5,
            margin: MarginScale::Gumbel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceTruth {
    /// Limiting pairwise χ.
    pub chi: f64,
    /// Pairwise coefficient of tail dependence.
    pub eta: f64,
    /// λ at `ω = (1/3, 1/3, 1/3)`.
    pub lambda_center: f64,
}

impl Copula {
    /// Limit values for the unmodulated copula.
    pub fn truth(&self) -> DependenceTruth {
        match *self {
            Copula::Independent => DependenceTruth {
                chi: 0.0,
                eta: 0.5,
                lambda_center: 1.0,
            },
            Copula::Comonotone => DependenceTruth {
                chi: 1.0,
                eta: 1.0,
                lambda_center: 1.0 / 3.0,
            },
            Copula::Gaussian { rho, .. } => {
                let r = rho.clamp(0.0, 0.99);
                DependenceTruth {
                    chi: 0.0,
                    eta: (1.0 + r) / 2.0,
                    lambda_center: 1.0 / (1.0 + 2.0 * r),
                }
            }
            Copula::Logistic { alpha } if alpha < 1.0 => DependenceTruth {
                chi: 2.0 - 2f64.powf(alpha),
                eta: 1.0,
                lambda_center: 1.0 / 3.0,
            },
            Copula::Logistic { .. } => Copula::Independent.truth(),
        }
    }
}

/// Positive stable variable with Laplace transform `exp(-t^a)` (Kanter).
fn positive_stable<R: Rng>(a: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() * PI;
    let w: f64 = Exp1.sample(rng);
    let part1 = (a * u).sin() / u.sin().powf(1.0 / a);
    let part2 = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    part1 * part2
}

fn trivariate_row<R: Rng>(copula: Copula, atm: f64, rng: &mut R) -> [f64; 3] {
    match copula {
        Copula::Independent => [0; 3].map(|_| Exp1.sample(rng)),
        Copula::Comonotone => {
            let e: f64 = Exp1.sample(rng);
            [e; 3]
        }
        Copula::Gaussian { rho, rho_atmosphere } => {
            let r = (rho + rho_atmosphere * atm).clamp(0.0, 0.99);
            let w: f64 = rng.sample(StandardNormal);
            [0; 3].map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                let z = r.sqrt() * w + (1.0 - r).sqrt() * e;
                -numeric::norm_sf(z).ln()
            })
        }
        Copula::Logistic { alpha } => {
            if alpha >= 1.0 {
                return [0; 3].map(|_| Exp1.sample(rng));
            }
            let s = positive_stable(alpha, rng);
            // U = exp(-(E/S)^a), so -ln(1 - U) is standard exponential
            [0; 3].map(|_| {
                let e: f64 = Exp1.sample(rng);
                let t = (e / s).powf(alpha);
                -(-(-t).exp_m1()).ln()
            })
        }
    }
}

/// Triples `Y1..Y3` on `cfg.margin` with `season`, a monthly
/// `atmosphere` covariate and calendar columns.
pub fn gen_trivariate(cfg: &TrivariateConfig, seed: u64) -> Result<Series> {
    if let Copula::Logistic { alpha } = cfg.copula {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Argument(format!("logistic alpha {alpha} outside (0,1]")));
        }
    }
    let mut rng = numeric::rng_for(seed, 0);
    let atm_spec = CovariateSpec {
        name: "atmosphere".into(),
        phi: cfg.atmosphere_phi,
        margin: CovariateMargin::Gaussian { mean: 0.0, sd: 1.0 },
        monthly: true,
    };
    let atm = atm_spec.generate(cfg.n, &cfg.calendar, &mut rng);
    let mut cols = (0..3).map(|_| Vec::with_capacity(cfg.n)).collect::<Vec<Vec<f64>>>();
    for &a in &atm {
        let row = trivariate_row(cfg.copula, a, &mut rng);
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(margins::transform(v, MarginScale::Exponential, cfg.margin)?);
        }
    }
    let mut data = Series::from_columns(vec![("Y1", cols[0].clone()), ("Y2", cols[1].clone()), ("Y3", cols[2].clone())])?
        .with_calendar(&cfg.calendar)?;
    data.set_column("atmosphere", atm)?;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WithinGroup {
    /// Equicorrelated Gaussian copula.
    Gaussian { rho: f64 },
    /// `W_j = α W_1 + max(W_1, 1)^β Z_j` with equicorrelated N(0,1) residuals.
    ConditionalExtremes { alpha: f64, beta: f64, rho_z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupedConfig {
    pub n: usize,
    /// 0-based member indices; together they must cover `0..d` exactly.
    pub groups: Vec<Vec<usize>>,
    pub within: WithinGroup,
}

impl Default for GroupedConfig {
    fn default() -> Self {
        GroupedConfig {
            n: 10_000,
            groups: reference::reference_groups()
                .into_iter()
                .map(|g| g.into_iter().map(|i| i - 1).collect())
                .collect(),
            within: WithinGroup::Gaussian { rho: 0.8 },
        }
    }
}

impl GroupedConfig {
    pub fn dim(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    fn validate(&self) -> Result<()> {
        let mut all: Vec<usize> = self.groups.concat();
        all.sort_unstable();
        if all != (0..all.len()).collect::<Vec<_>>() {
            return Err(Error::Argument("groups must partition 0..d".into()));
        }
        if self.groups.iter().any(Vec::is_empty) {
            return Err(Error::Argument("empty group".into()));
        }
        match self.within {
            WithinGroup::Gaussian { rho } if !(0.0..1.0).contains(&rho) => {
                Err(Error::Argument(format!("rho {rho} outside [0,1)")))
            }
            WithinGroup::ConditionalExtremes { alpha, beta, rho_z }
                if !((-1.0..=1.0).contains(&alpha) && beta < 1.0 && (0.0..1.0).contains(&rho_z)) =>
            {
                Err(Error::Argument("conditional-extremes parameters out of range".into()))
            }
            _ => Ok(()),
        }
    }
}

fn group_row<R: Rng>(within: WithinGroup, size: usize, rng: &mut R) -> Vec<f64> {
    let common: f64 = rng.sample(StandardNormal);
    match within {
        WithinGroup::Gaussian { rho } => (0..size)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                let z = rho.sqrt() * common + (1.0 - rho).sqrt() * e;
                laplace_from_normal(z)
            })
            .collect(),
        WithinGroup::ConditionalExtremes { alpha, beta, rho_z } => {
            let u: f64 = rng.random();
            let w1 = MarginScale::Laplace.quantile(u.max(1e-300)).unwrap_or(0.0);
            let mut row = vec![w1];
            let scale = w1.max(1.0).powf(beta);
            for _ in 1..size {
                let e: f64 = rng.sample(StandardNormal);
                let z = rho_z.sqrt() * common + (1.0 - rho_z).sqrt() * e;
                row.push(alpha * w1 + scale * z);
            }
            row
        }
    }
}

fn laplace_from_normal(z: f64) -> f64 {
    if z < 0.0 {
        (2.0 * numeric::norm_cdf(z)).ln()
    } else {
        -(2.0 * numeric::norm_sf(z)).ln()
    }
}

/// Rows `W1..Wd` made of mutually independent groups; Gaussian groups have
/// Laplace margins.
pub fn gen_grouped(cfg: &GroupedConfig, seed: u64) -> Result<Series> {
    cfg.validate()?;
    let d = cfg.dim();
    let mut cols = vec![Vec::with_capacity(cfg.n); d];
    let mut rng: ChaCha8Rng = numeric::rng_for(seed, 0);
    for _ in 0..cfg.n {
        for g in &cfg.groups {
            let vals = group_row(cfg.within, g.len(), &mut rng);
            for (&j, v) in g.iter().zip(vals) {
                cols[j].push(v);
            }
        }
    }
    Series::from_columns(cols.into_iter().enumerate().map(|(j, c)| (format!("W{}", j + 1), c)).collect())
}

/// Columns `W1..Wd` of a grouped data set, in order.
pub fn grouped_columns(data: &Series) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let mut j = 1;
    while data.has_column(&format!("W{j}")) {
        out.push(data.column(&format!("W{j}"))?.to_vec());
        j += 1;
    }
    Ok(out)
}

/// Metadata line carrying a JSON truth record.
pub fn truth_line<T: Serialize>(truth: &T) -> Result<String> {
    Ok(format!("truth: {}", serde_json::to_string(truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_is_beta22() {
        let mut rng = numeric::rng_for(1, 0);
        let v: Vec<f64> = (0..20000).map(|_| body_draw(&mut rng)).collect();
        assert!((numeric::mean(&v) - 0.5).abs() < 0.01);
        assert!((numeric::variance(&v) - 0.05).abs() < 0.003);
    }

    #[test]
    fn laplace_from_normal_is_monotone_and_centred() {
        assert!(laplace_from_normal(0.0).abs() < 1e-15);
        assert!(laplace_from_normal(1.0) > laplace_from_normal(0.5));
    }
}
