//! Command-line front end. Every command prints (or writes with `-o`) a JSON
//! report carrying the tool version, the resolved config, the seed and any
//! warnings; tables go to CSV.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::basis::{fit_nonstationary_gpd, FitSpec, Formula, Term};
use crate::condex;
use crate::dependence::{self, SliceRequest, Slicing};
use crate::error::{Error, Result};
use crate::margins::{self, MarginScale};
use crate::marginal::MarginalModel;
use crate::resampling::{self, BootstrapConfig};
use crate::selection;
use crate::series::{format_float, Calendar, Series};
use crate::synth::{self, GroupedConfig, TrivariateConfig, UnivariateConfig};
use crate::threshold_select::{self, EqdOptions};
use crate::workflow::{self, C1Config, C2Config, C3Config, C4Config, Report};

#[derive(Debug, Parser)]
#[command(name = "extremes", version, about = "Extreme value analysis of covariate-dependent and multivariate tails")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Base random seed; replicate r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    /// Data CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column, used when no config is given.
    #[arg(long, default_value = "Y")]
    pub response: String,
    /// Threshold quantile level, overriding the config.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Univariate,
    Trivariate,
    Grouped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Workflow {
    C1,
    C2,
    C3,
    C4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelKind {
    Year,
    Month,
}

#[derive(Debug, Subcommand)]
pub enum JointProb {
    /// Min-projection probabilities of the two trivariate events.
    Minproj {
        #[command(flatten)]
        common: Common,
        /// Data CSV overriding the config input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Fixed threshold level instead of the QQ-based choice.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Conditional-extremes probability of all variables exceeding a level.
    Condex {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// JSON list of 0-based groups; clustering by χ when omitted.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "year")]
        levels: LevelKind,
        #[arg(long, default_value_t = 100)]
        boot: usize,
        #[arg(long, default_value_t = 1_000_000)]
        sims: usize,
        /// Conditioning quantile.
        #[arg(long, default_value_t = 0.85)]
        tau: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data set with its truth record.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[command(flatten)]
        common: Common,
    },
    /// Change the marginal scale of columns.
    Transform {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Source margin; ignored with --empirical.
        #[arg(long, default_value = "uniform")]
        from: MarginScale,
        #[arg(long)]
        to: MarginScale,
        /// Use ranks instead of a known source margin.
        #[arg(long)]
        empirical: bool,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Choose the threshold level by expected quantile discrepancy.
    SelectThreshold {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95])]
        candidates: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        boot: usize,
    },
    /// Fit the covariate-dependent GPD tail model.
    FitGpd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
        /// Write the exponential QQ table here.
        #[arg(long)]
        qq: Option<PathBuf>,
    },
    /// Greedy forward selection of scale terms by cross-validated CRPS.
    ForwardSelect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
        /// Candidate terms separated by `;`, e.g. `lin(V1);crs(V2, B=6)`.
        #[arg(long)]
        pool: String,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Write the model comparison table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Conditional or marginal quantiles with bootstrap intervals.
    Quantile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 0.9999)]
        prob: f64,
        /// Average over covariate rows instead of conditioning on them.
        #[arg(long)]
        marginal: bool,
        /// Number of evenly spaced covariate rows for conditional quantiles.
        #[arg(long, default_value_t = 100)]
        targets: usize,
        #[arg(long, default_value_t = 0)]
        boot: usize,
        #[arg(long, default_value_t = 50)]
        block_mean: usize,
    },
    /// Pairwise χ and η matrices, optionally sliced by a covariate.
    DepMeasures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value_t = 0.95)]
        u: f64,
        /// Covariate to slice by.
        #[arg(long)]
        slice_by: Option<String>,
        /// Number of quantile slices; one slice per level when omitted.
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long, default_value_t = 200)]
        boot: usize,
        /// Write the χ matrix here as CSV.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Group variables by thresholding the pairwise χ matrix.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value_t = 0.95)]
        u: f64,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
    },
    /// Joint tail probabilities.
    JointProb {
        #[command(subcommand)]
        method: JointProb,
    },
    /// Run one of the four end-to-end analyses.
    Run {
        #[arg(value_enum)]
        workflow: Workflow,
        #[command(flatten)]
        common: Common,
        /// Bootstrap replicates, overriding the config.
        #[arg(long)]
        boot: Option<usize>,
    },
}

fn read_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => Ok(serde_json::from_reader(File::open(p)?)?),
    }
}

fn emit(text: &str, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_report<C: Serialize, R: Serialize>(r: &Report<C, R>, output: &Option<PathBuf>) -> Result<()> {
    emit(&r.to_json()?, output)
}

fn fit_spec(common: &Common, args: &FitArgs) -> Result<FitSpec> {
    let mut spec = match &common.config {
        Some(p) => serde_json::from_reader(File::open(p)?)?,
        None => FitSpec::stationary(&args.response, 0.9),
    };
    if let Some(t) = args.tau {
        spec.threshold = spec.threshold.with_tau(t);
    }
    Ok(spec)
}

fn write_table(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        let s: Vec<String> = r.into_iter().map(format_float).collect();
        writeln!(w, "{}", s.join(","))?;
    }
    Ok(())
}

fn columns(data: &Series, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let names: Vec<String> = if names.is_empty() { data.names().to_vec() } else { names.to_vec() };
    names.iter().map(|n| Ok(data.column(n)?.to_vec())).collect()
}

fn complete_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = cols.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..n).filter(|&t| cols.iter().all(|c| !c[t].is_nan())).collect();
    cols.into_iter().map(|c| keep.iter().map(|&t| c[t]).collect()).collect()
}

fn synth_command(kind: SynthKind, common: &Common) -> Result<()> {
    let seed = common.seed;
    let (data, truth) = match kind {
        SynthKind::Univariate => {
            let cfg: UnivariateConfig = read_config(&common.config)?;
            let d = synth::gen_univariate(&cfg, seed)?;
            (d, serde_json::json!({"kind": "univariate", "seed": seed, "config": cfg}))
        }
        SynthKind::Trivariate => {
            let cfg: TrivariateConfig = read_config(&common.config)?;
            let d = synth::gen_trivariate(&cfg, seed)?;
            let t = cfg.copula.truth();
            (d, serde_json::json!({"kind": "trivariate", "seed": seed, "config": cfg, "dependence": t}))
        }
        SynthKind::Grouped => {
            let cfg: GroupedConfig = read_config(&common.config)?;
            let d = synth::gen_grouped(&cfg, seed)?;
            (d, serde_json::json!({"kind": "grouped", "seed": seed, "config": cfg}))
        }
    };
    let meta = vec![
        format!("tool: {} {}", workflow::TOOL, workflow::VERSION),
        synth::truth_line(&truth)?,
    ];
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &meta)?;
    emit(&String::from_utf8_lossy(&buf), &common.output)
}

fn transform_command(
    input: &Path,
    cols: &[String],
    from: MarginScale,
    to: MarginScale,
    empirical: bool,
    output: &Option<PathBuf>,
) -> Result<()> {
    let mut data = Series::read_csv_path(input)?;
    let names: Vec<String> = if cols.is_empty() { data.names().to_vec() } else { cols.to_vec() };
    for name in &names {
        let col = data.column(name)?.to_vec();
        let out: Vec<f64> = if empirical {
            let present: Vec<usize> = (0..col.len()).filter(|&t| !col[t].is_nan()).collect();
            let vals: Vec<f64> = present.iter().map(|&t| col[t]).collect();
            let u = margins::to_uniform_ranks(&vals);
            let mut out = vec![f64::NAN; col.len()];
            for (k, &t) in present.iter().enumerate() {
                out[t] = margins::transform(u[k], MarginScale::Uniform, to)?;
            }
            out
        } else {
            col.iter()
                .map(|&v| if v.is_nan() { Ok(v) } else { margins::transform(v, from, to) })
                .collect::<Result<_>>()?
        };
        data.set_column(name.clone(), out)?;
    }
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &[])?;
    emit(&String::from_utf8_lossy(&buf), output)
}

fn parse_pool(pool: &str) -> Result<Vec<Term>> {
    pool.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let f = Formula::parse(s.trim())?;
            match f.terms.as_slice() {
                [t] => Ok(t.clone()),
                _ => Err(Error::Parse(format!("pool entry `{s}` must be a single term"))),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct QuantileOut {
    row: Option<usize>,
    point: f64,
    interval: Option<resampling::Interval>,
}

#[allow(clippy::too_many_arguments)]
fn quantile_command(
    common: &Common,
    fit_args: &FitArgs,
    prob: f64,
    marginal: bool,
    targets: usize,
    boot: usize,
    block_mean: usize,
) -> Result<()> {
    let spec = fit_spec(common, fit_args)?;
    let data = Series::read_csv_path(&fit_args.input)?;
    let fit = fit_nonstationary_gpd(&spec, &data)?;
    let rows = if marginal { Vec::new() } else { workflow::target_rows(&data, &spec, targets)? };
    let target_data = data.select_rows(&rows);
    let estimate = |f: &crate::basis::GpdFit| -> Result<Vec<f64>> {
        if marginal {
            Ok(vec![MarginalModel::new(f, &data)?.quantile(prob)?])
        } else {
            (0..rows.len()).map(|r| f.conditional_quantile(prob, &target_data, r)).collect()
        }
    };
    let point = estimate(&fit)?;
    let mut warnings = fit.warnings.clone();
    let intervals = if boot > 0 {
        let cfg = BootstrapConfig {
            n_boot: boot,
            block_mean,
            seed: common.seed,
            ..Default::default()
        };
        let b = resampling::semiparametric_response_bootstrap(&fit, &spec, &data, &cfg, |f, _| estimate(f))?;
        warnings.extend(b.warnings.iter().cloned());
        b.intervals()?.into_iter().map(Some).collect()
    } else {
        vec![None; point.len()]
    };
    let out: Vec<QuantileOut> = point
        .iter()
        .zip(intervals)
        .enumerate()
        .map(|(k, (&p, iv))| QuantileOut {
            row: (!marginal).then(|| rows[k]),
            point: p,
            interval: iv,
        })
        .collect();
    let config = serde_json::json!({
        "fit": spec, "prob": prob, "marginal": marginal, "targets": targets,
        "boot": boot, "block_mean": block_mean, "input": fit_args.input,
    });
    emit_report(&Report::new("quantile", common.seed, config, out, warnings), &common.output)
}

#[allow(clippy::too_many_arguments)]
fn dep_command(
    common: &Common,
    input: &Path,
    names: &[String],
    u: f64,
    slice_by: &Option<String>,
    slices: Option<usize>,
    boot: usize,
    heatmap: &Option<PathBuf>,
) -> Result<()> {
    let data = Series::read_csv_path(input)?;
    let raw = columns(&data, names)?;
    let uni = dependence::rank_transform(&complete_columns(raw.clone()));
    let chi = dependence::chi_matrix(&uni, u)?;
    let eta = dependence::eta_matrix(&uni, u)?;
    if let Some(p) = heatmap {
        let d = chi.len();
        let header: Vec<String> = (1..=d).map(|j| format!("V{j}")).collect();
        write_table(p, &header.join(","), chi.iter().cloned())?;
    }
    let sliced = match slice_by {
        None => Vec::new(),
        Some(var) => {
            let cov = data.column(var)?;
            let slicing = slices.map_or(Slicing::Levels, |k| Slicing::Quantiles { k });
            let d = raw.len();
            let req = SliceRequest {
                index_sets: vec![(0..d).collect()],
                u,
                omegas: vec![vec![1.0 / d as f64; d]],
                lambda_level: 0.9,
                n_boot: boot,
                seed: common.seed,
            };
            dependence::sliced_summaries(&raw, cov, &slicing, &req)?
        }
    };
    let config = serde_json::json!({
        "input": input, "columns": names, "u": u, "slice_by": slice_by, "slices": slices, "boot": boot,
    });
    let result = serde_json::json!({"chi": chi, "eta": eta, "sliced": sliced});
    emit_report(&Report::new("dep-measures", common.seed, config, result, Vec::new()), &common.output)
}

fn condex_command(
    common: &Common,
    input: &Path,
    groups: &Option<PathBuf>,
    levels: LevelKind,
    boot: usize,
    sims: usize,
    tau: f64,
) -> Result<()> {
    let groups: Option<Vec<Vec<usize>>> = match groups {
        Some(p) => Some(serde_json::from_reader(File::open(p)?)?),
        None => None,
    };
    let cal = Calendar::default();
    let (s1, s2) = condex::challenge_levels(&cal)?;
    let cfg = C4Config {
        input: Some(input.display().to_string()),
        groups,
        cond_quantile: tau,
        n_sim: sims,
        n_boot: boot,
        // every site at the same level: the second probability of the report
        first_block: 0,
        ..Default::default()
    };
    let report = workflow::run_c4(&cfg, common.seed)?;
    let r = &report.result;
    let (level, p, iv, per_group): (f64, f64, _, Vec<f64>) = match levels {
        LevelKind::Year => (s1, r.p2, r.p2_interval.clone(), r.groups.iter().map(|g| g.p2).collect()),
        // all sites beyond first_block = 0 use the monthly level in p1
        LevelKind::Month => (s2, r.p1, r.p1_interval.clone(), r.groups.iter().map(|g| g.p1).collect()),
    };
    let result = serde_json::json!({
        "level": level,
        "groups": r.groups.iter().map(|g| &g.members).collect::<Vec<_>>(),
        "per_group": per_group,
        "probability": p,
        "interval": iv,
    });
    emit_report(
        &Report::new("joint-prob condex", common.seed, cfg, result, report.warnings.clone()),
        &common.output,
    )
}

fn with_boot(mut b: BootstrapConfig, boot: Option<usize>) -> BootstrapConfig {
    if let Some(n) = boot {
        b.n_boot = n;
    }
    b
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { kind, common } => synth_command(kind, &common),
        Command::Transform {
            input,
            columns,
            from,
            to,
            empirical,
            output,
        } => transform_command(&input, &columns, from, to, empirical, &output),
        Command::SelectThreshold {
            common,
            fit,
            candidates,
            boot,
        } => {
            let spec = fit_spec(&common, &fit)?;
            let data = Series::read_csv_path(&fit.input)?;
            let opts = EqdOptions {
                n_boot: boot,
                seed: common.seed,
                ..Default::default()
            };
            let r = threshold_select::eqd_select(&data, &spec, &candidates, &opts)?;
            let w = r.warnings.clone();
            let config = serde_json::json!({"fit": spec, "candidates": candidates, "options": opts, "input": fit.input});
            emit_report(&Report::new("select-threshold", common.seed, config, r, w), &common.output)
        }
        Command::FitGpd { common, fit, qq } => {
            let spec = fit_spec(&common, &fit)?;
            let data = Series::read_csv_path(&fit.input)?;
            let g = fit_nonstationary_gpd(&spec, &data)?;
            if let Some(p) = qq {
                let t = g.qq_table(&data)?;
                write_table(&p, "theoretical,empirical", t.into_iter().map(|(a, b)| vec![a, b]))?;
            }
            let w = g.warnings.clone();
            let config = serde_json::json!({"fit": spec, "input": fit.input});
            emit_report(&Report::new("fit-gpd", common.seed, config, &g, w), &common.output)
        }
        Command::ForwardSelect {
            common,
            fit,
            pool,
            folds,
            table,
        } => {
            let spec = fit_spec(&common, &fit)?;
            let data = Series::read_csv_path(&fit.input)?;
            let terms = parse_pool(&pool)?;
            let r = selection::forward_select(&data, &spec, &terms, folds)?;
            if let Some(p) = table {
                r.write_csv(std::io::BufWriter::new(File::create(p)?))?;
            }
            let config = serde_json::json!({"fit": spec, "pool": pool, "folds": folds, "input": fit.input});
            emit_report(&Report::new("forward-select", common.seed, config, r, Vec::new()), &common.output)
        }
        Command::Quantile {
            common,
            fit,
            prob,
            marginal,
            targets,
            boot,
            block_mean,
        } => quantile_command(&common, &fit, prob, marginal, targets, boot, block_mean),
        Command::DepMeasures {
            common,
            input,
            columns,
            u,
            slice_by,
            slices,
            boot,
            heatmap,
        } => dep_command(&common, &input, &columns, u, &slice_by, slices, boot, &heatmap),
        Command::Cluster {
            common,
            input,
            columns: names,
            u,
            c,
        } => {
            let data = Series::read_csv_path(&input)?;
            let uni = dependence::rank_transform(&complete_columns(columns(&data, &names)?));
            let r = dependence::cluster_by_chi(&dependence::chi_matrix(&uni, u)?, c)?;
            let config = serde_json::json!({"input": input, "columns": names, "u": u, "c": c});
            emit_report(&Report::new("cluster", common.seed, config, r, Vec::new()), &common.output)
        }
        Command::JointProb { method } => match method {
            JointProb::Minproj { common, input, tau } => {
                let mut cfg: C3Config = read_config(&common.config)?;
                if let Some(p) = input {
                    cfg.input = Some(p.display().to_string());
                }
                if let Some(t) = tau {
                    cfg.taus = vec![t];
                }
                let mut r = workflow::run_c3(&cfg, common.seed)?;
                r.command = "joint-prob minproj".into();
                emit_report(&r, &common.output)
            }
            JointProb::Condex {
                common,
                input,
                groups,
                levels,
                boot,
                sims,
                tau,
            } => condex_command(&common, &input, &groups, levels, boot, sims, tau),
        },
        Command::Run { workflow: w, common, boot } => match w {
            Workflow::C1 => {
                let mut cfg: C1Config = read_config(&common.config)?;
                cfg.bootstrap = with_boot(cfg.bootstrap, boot);
                emit_report(&workflow::run_c1(&cfg, common.seed)?, &common.output)
            }
            Workflow::C2 => {
                let mut cfg: C2Config = read_config(&common.config)?;
                cfg.bootstrap = with_boot(cfg.bootstrap, boot);
                emit_report(&workflow::run_c2(&cfg, common.seed)?, &common.output)
            }
            Workflow::C3 => {
                let cfg: C3Config = read_config(&common.config)?;
                emit_report(&workflow::run_c3(&cfg, common.seed)?, &common.output)
            }
            Workflow::C4 => {
                let mut cfg: C4Config = read_config(&common.config)?;
                if let Some(n) = boot {
                    cfg.n_boot = n;
                }
                emit_report(&workflow::run_c4(&cfg, common.seed)?, &common.output)
            }
        },
    }
}
