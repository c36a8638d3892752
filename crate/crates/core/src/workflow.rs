//! End-to-end analyses for the four challenge tasks. Each run takes a
//! serializable config, reads data from `input` or generates it from the
//! embedded synthetic config, and returns a [`Report`] whose JSON rendering
//! is a pure function of config and seed.

use serde::{Deserialize, Serialize};

use crate::basis::{fit_nonstationary_gpd, FitSpec, Formula, GpdFit, ThresholdSpec};
use crate::condex::{self, CondExtFit};
use crate::dependence;
use crate::error::{Error, Result};
use crate::margins::{self, MarginScale};
use crate::marginal::{return_period_probability, MarginalModel};
use crate::minproj::{self, MinProjConfig, SimplexRay};
use crate::numeric;
use crate::resampling::{self, BootstrapConfig, Interval};
use crate::series::{Calendar, Series};
use crate::synth::{self, GroupedConfig, TrivariateConfig, UnivariateConfig};
use crate::threshold_select::loss_augmented_refit;

pub const TOOL: &str = "extremes";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: C,
    pub result: R,
    pub warnings: Vec<String>,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(command: &str, seed: u64, config: C, result: R, mut warnings: Vec<String>) -> Self {
        warnings.sort();
        warnings.dedup();
        Report {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            config,
            result,
            warnings,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn load_or_generate<F>(input: &Option<String>, generate: F) -> Result<(Series, bool)>
where
    F: FnOnce() -> Result<Series>,
{
    match input {
        Some(path) => Ok((Series::read_csv_path(path)?, false)),
        None => Ok((generate()?, true)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub scale_formula: String,
    pub scale_coef: Vec<f64>,
    pub shape: f64,
    pub shape_ci95: Option<(f64, f64)>,
    pub lambdas: Vec<f64>,
    pub edf: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub n_exceed: usize,
    pub rates: Vec<(Option<f64>, f64)>,
}

impl From<&GpdFit> for FitSummary {
    fn from(f: &GpdFit) -> Self {
        FitSummary {
            scale_formula: f.scale_formula.clone(),
            scale_coef: f.scale_coef.clone(),
            shape: f.shape,
            shape_ci95: f.shape_ci(0.95),
            lambdas: f.lambdas.clone(),
            edf: f.edf,
            log_likelihood: f.log_likelihood,
            aic: f.aic(),
            bic: f.bic(),
            n: f.n,
            n_exceed: f.n_v,
            rates: f.strata.iter().map(|s| (s.level, s.rate)).collect(),
        }
    }
}

fn default_c1_fit() -> FitSpec {
    FitSpec::new(
        "Y",
        ThresholdSpec::Stepped {
            var: "season".into(),
            tau: 0.8,
        },
        Formula::parse("1 + lin(V3) + lin(V6) + crs(V2, B=6) + ind(season==2)").expect("valid formula"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C1Config {
    pub input: Option<String>,
    pub synth: UnivariateConfig,
    pub fit: FitSpec,
    pub prob: f64,
    pub n_targets: usize,
    pub bootstrap: BootstrapConfig,
}

impl Default for C1Config {
    fn default() -> Self {
        C1Config {
            input: None,
            synth: UnivariateConfig::default(),
            fit: default_c1_fit(),
            prob: 0.9999,
            n_targets: 100,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileEntry {
    pub row: usize,
    pub point: f64,
    pub median: f64,
    pub lo50: f64,
    pub hi50: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Result {
    pub fit: FitSummary,
    pub prob: f64,
    pub entries: Vec<QuantileEntry>,
    pub replicates: usize,
    pub dropped: usize,
    pub coverage50: Option<f64>,
}

/// `k` rows spread evenly over the rows with every fit variable present.
pub fn target_rows(data: &Series, spec: &FitSpec, k: usize) -> Result<Vec<usize>> {
    let vars = spec.variables();
    let refs: Vec<&str> = vars.iter().filter(|v| **v != spec.response).map(String::as_str).collect();
    let rows = data.complete_rows(&refs)?;
    if rows.is_empty() || k == 0 {
        return Err(Error::InsufficientData {
            needed: k.max(1),
            got: rows.len(),
            context: "rows with complete covariates".into(),
        });
    }
    let k = k.min(rows.len());
    Ok((0..k).map(|i| rows[i * rows.len() / k]).collect())
}

/// Conditional quantiles at covariate rows with 50% stationary-bootstrap intervals.
pub fn run_c1(cfg: &C1Config, seed: u64) -> Result<Report<C1Config, C1Result>> {
    let (data, synthetic) = load_or_generate(&cfg.input, || synth::gen_univariate(&cfg.synth, seed))?;
    let fit = fit_nonstationary_gpd(&cfg.fit, &data)?;
    let rows = target_rows(&data, &cfg.fit, cfg.n_targets)?;
    let targets = data.select_rows(&rows);
    let quantiles = |f: &GpdFit| -> Result<Vec<f64>> {
        (0..targets.n_rows())
            .map(|r| f.conditional_quantile(cfg.prob, &targets, r))
            .collect()
    };
    let point = quantiles(&fit)?;
    let boot_cfg = BootstrapConfig {
        seed,
        ..cfg.bootstrap.clone()
    };
    let boot = resampling::semiparametric_response_bootstrap(&fit, &cfg.fit, &data, &boot_cfg, |f, _| quantiles(f))?;
    let intervals = boot.intervals()?;
    let mut entries = Vec::with_capacity(rows.len());
    for (k, (&row, iv)) in rows.iter().zip(&intervals).enumerate() {
        let truth = if synthetic {
            Some(cfg.synth.true_quantile(cfg.prob, &data, row)?)
        } else {
            None
        };
        entries.push(QuantileEntry {
            row,
            point: point[k],
            median: iv.median,
            lo50: iv.lo50,
            hi50: iv.hi50,
            truth,
        });
    }
    let coverage50 = synthetic.then(|| {
        let hit = entries
            .iter()
            .filter(|e| e.truth.is_some_and(|t| t >= e.lo50 && t <= e.hi50))
            .count();
        hit as f64 / entries.len() as f64
    });
    let mut warnings = fit.warnings.clone();
    warnings.extend(boot.warnings.iter().cloned());
    let result = C1Result {
        fit: FitSummary::from(&fit),
        prob: cfg.prob,
        entries,
        replicates: boot.replicates.len(),
        dropped: boot.dropped,
        coverage50,
    };
    Ok(Report::new("run c1", seed, cfg.clone(), result, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C2Config {
    pub input: Option<String>,
    pub synth: UnivariateConfig,
    pub fit: FitSpec,
    pub loss_weight: f64,
    pub return_years: f64,
    pub bootstrap: BootstrapConfig,
}

impl Default for C2Config {
    fn default() -> Self {
        C2Config {
            input: None,
            synth: UnivariateConfig::default(),
            fit: default_c1_fit(),
            loss_weight: 1.0,
            return_years: 200.0,
            bootstrap: BootstrapConfig {
                n_boot: 100,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2Result {
    pub fit: FitSummary,
    pub prob: f64,
    pub quantile: f64,
    pub unadjusted_quantile: f64,
    pub interval: Interval,
    pub replicates: usize,
    pub dropped: usize,
    pub truth: Option<f64>,
}

/// Marginal quantile of the true model averaged over rows with complete covariates.
pub fn true_marginal_quantile(cfg: &UnivariateConfig, data: &Series, prob: f64) -> Result<f64> {
    let mut parts = Vec::new();
    for r in 0..data.n_rows() {
        if let Ok((v, zeta, p)) = cfg.truth_at(data, r) {
            if p.scale.is_finite() {
                parts.push((v, zeta, p));
            }
        }
    }
    if parts.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "rows with complete covariates".into(),
        });
    }
    let n = parts.len() as f64;
    let surv = |y: f64| parts.iter().map(|(v, z, p)| z * crate::gpd::survival_unchecked(y - v, *p)).sum::<f64>() / n;
    let lo = parts.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = lo + 1.0;
    while surv(hi) > 1.0 - prob {
        hi = lo + 2.0 * (hi - lo);
    }
    numeric::bisect(|y| surv(y).ln() - (1.0 - prob).ln(), lo, hi, 1e-12)
}

/// Marginal return level from a loss-augmented fit with a 95% bootstrap interval.
pub fn run_c2(cfg: &C2Config, seed: u64) -> Result<Report<C2Config, C2Result>> {
    let (data, synthetic) = load_or_generate(&cfg.input, || synth::gen_univariate(&cfg.synth, seed))?;
    let prob = 1.0 - return_period_probability(cfg.return_years, cfg.synth.calendar.days_per_year as f64);
    let base = fit_nonstationary_gpd(&cfg.fit, &data)?;
    let adjusted = loss_augmented_refit(&base, &data, cfg.loss_weight)?;
    let quantile = MarginalModel::new(&adjusted, &data)?.quantile(prob)?;
    let unadjusted_quantile = MarginalModel::new(&base, &data)?.quantile(prob)?;
    let boot_cfg = BootstrapConfig {
        seed,
        ..cfg.bootstrap.clone()
    };
    let boot = resampling::semiparametric_response_bootstrap(&base, &cfg.fit, &data, &boot_cfg, |f, b| {
        let adj = loss_augmented_refit(f, b, cfg.loss_weight)?;
        Ok(vec![MarginalModel::new(&adj, &data)?.quantile(prob)?])
    })?;
    let interval = resampling::percentile_interval(&boot.replicates.iter().map(|r| r[0]).collect::<Vec<_>>())?;
    let truth = if synthetic {
        Some(true_marginal_quantile(&cfg.synth, &data, prob)?)
    } else {
        None
    };
    let mut warnings = adjusted.warnings.clone();
    warnings.extend(boot.warnings.iter().cloned());
    let result = C2Result {
        fit: FitSummary::from(&adjusted),
        prob,
        quantile,
        unadjusted_quantile,
        interval,
        replicates: boot.replicates.len(),
        dropped: boot.dropped,
        truth,
    };
    Ok(Report::new("run c2", seed, cfg.clone(), result, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C3Targets {
    /// Level for `{Y_1 > y, Y_2 > y, Y_3 > y}`.
    pub y: f64,
    /// Levels for `{Y_1 > v, Y_2 > v, Y_3 < m}`.
    pub v: f64,
    pub m: f64,
}

impl Default for C3Targets {
    fn default() -> Self {
        C3Targets {
            y: 6.0,
            v: 7.0,
            m: -(2f64.ln().ln()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C3Config {
    pub input: Option<String>,
    pub synth: TrivariateConfig,
    pub columns: Vec<String>,
    pub covariates: Vec<String>,
    /// Margin of the data columns and of the targets.
    pub margin: MarginScale,
    pub targets: C3Targets,
    pub minproj: MinProjConfig,
    /// Candidate quantile levels for the threshold; the best QQ fit is kept.
    pub taus: Vec<f64>,
    pub qq_sims: usize,
}

impl Default for C3Config {
    fn default() -> Self {
        C3Config {
            input: None,
            synth: TrivariateConfig::default(),
            columns: vec!["Y1".into(), "Y2".into(), "Y3".into()],
            covariates: vec!["season".into(), "atmosphere".into()],
            margin: MarginScale::Gumbel,
            targets: C3Targets::default(),
            minproj: MinProjConfig::default(),
            taus: minproj::default_tau_grid(),
            qq_sims: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventResult {
    pub ray: SimplexRay,
    pub tau: f64,
    pub shape: f64,
    pub shape_ci95: Option<(f64, f64)>,
    pub probability: f64,
    pub qq_mean_abs: f64,
    pub qq_inside: f64,
    pub taus: Vec<minproj::TauDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C3Result {
    pub events: Vec<EventResult>,
}

/// The named columns on exponential margins.
fn exponential_columns(data: &Series, cols: &[String], margin: MarginScale) -> Result<Vec<Vec<f64>>> {
    cols.iter()
        .map(|c| {
            data.column(c)?
                .iter()
                .map(|&v| margins::transform(v, margin, MarginScale::Exponential))
                .collect()
        })
        .collect()
}

/// Min-projection estimates of the two joint tail probabilities.
pub fn run_c3(cfg: &C3Config, seed: u64) -> Result<Report<C3Config, C3Result>> {
    if cfg.columns.len() != 3 {
        return Err(Error::Argument("three data columns are required".into()));
    }
    let (data, _) = load_or_generate(&cfg.input, || synth::gen_trivariate(&cfg.synth, seed))?;
    let z = exponential_columns(&data, &cfg.columns, cfg.margin)?;
    let mut z_neg = z.clone();
    z_neg[2] = z[2].iter().map(|&v| minproj::negate_third_margin(v)).collect::<Result<_>>()?;
    let cov_names: Vec<(String, Vec<f64>)> = cfg
        .covariates
        .iter()
        .map(|c| Ok((c.clone(), data.column(c)?.to_vec())))
        .collect::<Result<_>>()?;
    let covariates = Series::from_columns(cov_names)?;
    let (ray1, ray2) = minproj::build_challenge_rays(cfg.targets.y, cfg.targets.v, cfg.targets.m, cfg.margin)?;
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    for (k, (ray, cols)) in [(ray1, &z), (ray2, &z_neg)].into_iter().enumerate() {
        let (fit, table, taus) = minproj::select_tau(cols, &covariates, &ray, &cfg.taus, &cfg.minproj)?;
        let probability = minproj::joint_survivor_probability(&fit, &table, ray.radius)?;
        let qq = minproj::minproj_qq(&fit.gpd, &table, cfg.qq_sims, 0.95, seed.wrapping_add(k as u64))?;
        warnings.extend(fit.gpd.warnings.iter().cloned());
        if probability == 0.0 {
            warnings.push(format!(
                "event {}: radius {:.3} lies beyond the fitted upper endpoint (shape {:.3})",
                k + 1,
                ray.radius,
                fit.gpd.shape
            ));
        }
        events.push(EventResult {
            tau: fit.tau,
            shape: fit.gpd.shape,
            shape_ci95: fit.shape_ci(0.95),
            probability,
            qq_mean_abs: qq.mean_abs_deviation(),
            qq_inside: qq.fraction_inside(),
            taus,
            ray,
        });
    }
    Ok(Report::new("run c3", seed, cfg.clone(), C3Result { events }, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C4Config {
    pub input: Option<String>,
    pub synth: GroupedConfig,
    pub calendar: Calendar,
    /// Level for the pairwise χ matrix.
    pub chi_level: f64,
    /// Edge threshold on χ for clustering.
    pub link: f64,
    /// Skip clustering and use these 0-based groups.
    pub groups: Option<Vec<Vec<usize>>>,
    pub cond_quantile: f64,
    pub n_sim: usize,
    pub n_boot: usize,
    /// Sites `0..first_block` use the yearly level in the first probability,
    /// the rest the monthly level.
    pub first_block: usize,
}

impl Default for C4Config {
    fn default() -> Self {
        C4Config {
            input: None,
            synth: GroupedConfig::default(),
            calendar: Calendar::default(),
            chi_level: 0.95,
            link: 0.1,
            groups: None,
            cond_quantile: 0.85,
            n_sim: 1_000_000,
            n_boot: 100,
            first_block: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    /// 1-based variable indices.
    pub members: Vec<usize>,
    pub cond: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    pub p1_interval: Option<Interval>,
    pub p2_interval: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C4Result {
    pub levels: (f64, f64),
    pub groups: Vec<GroupResult>,
    pub p1: f64,
    pub p2: f64,
    pub p1_interval: Option<Interval>,
    pub p2_interval: Option<Interval>,
}

fn data_columns(data: &Series) -> Result<Vec<Vec<f64>>> {
    let cols = synth::grouped_columns(data)?;
    if !cols.is_empty() {
        return Ok(cols);
    }
    data.names().iter().map(|n| Ok(data.column(n)?.to_vec())).collect()
}

/// Per-group joint exceedance probability with its bootstrap replicates.
fn group_probability(
    fit: &CondExtFit,
    levels: &[f64],
    n_sim: usize,
    n_boot: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let p = condex::group_exceedance_probability(fit, levels, n_sim, seed)?.probability;
    let reps = if n_boot > 0 {
        resampling::parametric_bootstrap_condex(fit, levels, n_sim, n_boot, seed.wrapping_add(1))?.estimates
    } else {
        Vec::new()
    };
    Ok((p, reps))
}

fn product_interval(reps: &[Vec<f64>]) -> Option<Interval> {
    let m = reps.iter().map(Vec::len).min()?;
    if m == 0 {
        return None;
    }
    let prod: Vec<f64> = (0..m).map(|r| reps.iter().map(|g| g[r]).product()).collect();
    resampling::percentile_interval(&prod).ok()
}

/// Clusters sites by χ, fits a conditional-extremes model per group and
/// multiplies the group probabilities.
pub fn run_c4(cfg: &C4Config, seed: u64) -> Result<Report<C4Config, C4Result>> {
    let (data, _) = load_or_generate(&cfg.input, || synth::gen_grouped(&cfg.synth, seed))?;
    let raw = data_columns(&data)?;
    let d = raw.len();
    let groups = match &cfg.groups {
        Some(g) => g.clone(),
        None => {
            let u = dependence::rank_transform(&raw);
            dependence::cluster_by_chi(&dependence::chi_matrix(&u, cfg.chi_level)?, cfg.link)?.groups
        }
    };
    let w = condex::laplace_transform(&raw);
    let (s1, s2) = condex::challenge_levels(&cfg.calendar)?;
    let mut out = Vec::with_capacity(groups.len());
    let mut warnings = Vec::new();
    let mut reps1 = Vec::new();
    let mut reps2 = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        if g.iter().any(|&j| j >= d) {
            return Err(Error::Argument(format!("group {k} refers to a variable beyond {d}")));
        }
        let cols: Vec<Vec<f64>> = g.iter().map(|&j| w[j].clone()).collect();
        let fit = condex::fit_condext(&cols, 0, cfg.cond_quantile)?;
        warnings.extend(fit.warnings.iter().map(|m| format!("group {}: {m}", k + 1)));
        let lv1: Vec<f64> = g.iter().map(|&j| if j < cfg.first_block { s1 } else { s2 }).collect();
        let lv2 = vec![s1; g.len()];
        let gseed = seed.wrapping_add(1000 * k as u64);
        let (p1, r1) = group_probability(&fit, &lv1, cfg.n_sim, cfg.n_boot, gseed)?;
        let (p2, r2) = group_probability(&fit, &lv2, cfg.n_sim, cfg.n_boot, gseed.wrapping_add(500))?;
        out.push(GroupResult {
            members: g.iter().map(|j| j + 1).collect(),
            cond: g[0] + 1,
            alpha: fit.alpha.clone(),
            beta: fit.beta.clone(),
            p1,
            p2,
            p1_interval: resampling::percentile_interval(&r1).ok(),
            p2_interval: resampling::percentile_interval(&r2).ok(),
        });
        reps1.push(r1);
        reps2.push(r2);
    }
    let p1 = condex::factorized_probability(&out.iter().map(|g| g.p1).collect::<Vec<_>>())?;
    let p2 = condex::factorized_probability(&out.iter().map(|g| g.p2).collect::<Vec<_>>())?;
    let result = C4Result {
        levels: (s1, s2),
        groups: out,
        p1,
        p2,
        p1_interval: product_interval(&reps1),
        p2_interval: product_interval(&reps2),
    };
    Ok(Report::new("run c4", seed, cfg.clone(), result, warnings))
}
