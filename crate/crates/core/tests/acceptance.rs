//! Acceptance checks. Prints one PASS/FAIL line per criterion and a summary.
//! Failures are fatal only with `ACCEPTANCE_STRICT` set. Pass criterion
//! numbers as arguments to run a subset.

use std::time::{Duration, Instant};

use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdModel, ThresholdSpec};
use extremes::condex::{self, fit_condext, group_exceedance_probability};
use extremes::dependence::{self, chi_u, cluster_by_chi, eta_u, hill_lambda};
use extremes::gpd::{self, GpdParams};
use extremes::marginal::MarginalModel;
use extremes::minproj::{self, build_challenge_rays, select_tau, MinProjConfig, SimplexRay};
use extremes::margins::MarginScale;
use extremes::numeric::{self, rng_for};
use extremes::reference::{reference_values, ReferenceValues};
use extremes::resampling::{self, BootstrapConfig};
use extremes::scoring::{competition_loss, crps};
use extremes::series::Series;
use extremes::synth::{
    self, Copula, CovariateMargin, CovariateSpec, GroupedConfig, LogScale, TrivariateConfig, UnivariateConfig,
    WithinGroup,
};
use extremes::threshold_select::{eqd_select, EqdOptions};
use extremes::workflow::{self, C1Config, C2Config, C3Config, C4Config};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn exp_columns(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, 0);
    (0..d).map(|_| (0..n).map(|_| Exp1.sample(&mut rng)).collect()).collect()
}

fn gpd_recovery() -> Outcome {
    let truth = GpdParams::new(2.0, 0.1).unwrap();
    let mut rng = rng_for(11, 0);
    let x: Vec<f64> = (0..20_000).map(|_| gpd::sample(&mut rng, truth)).collect();
    let start = Instant::now();
    let fit = gpd::fit_mle(&x).unwrap();
    let t = start.elapsed();
    let zs = (fit.params.scale - 2.0) / fit.std_errors.0;
    let zx = (fit.params.shape - 0.1) / fit.std_errors.1;
    outcome(
        zs.abs() < 3.0 && zx.abs() < 3.0 && t < Duration::from_secs(1),
        format!(
            "sigma {:.4} (z {zs:.2}), xi {:.4} (z {zx:.2}), {:.3}s",
            fit.params.scale,
            fit.params.shape,
            secs(t)
        ),
    )
}

fn scale_recovery() -> Outcome {
    let cfg = UnivariateConfig::smooth_scale(25_000, 0.05);
    let data = synth::gen_univariate(&cfg, 5).unwrap();
    // the planted threshold, so every excess is exactly GPD
    let spec = FitSpec::new(
        "Y",
        ThresholdSpec::Fixed {
            model: ThresholdModel::Constant { value: cfg.thresholds[0] },
        },
        Formula::parse("1 + crs(x, B=10)").unwrap(),
    );
    let start = Instant::now();
    let fit = fit_nonstationary_gpd(&spec, &data).unwrap();
    let t = start.elapsed();
    let grid: Vec<f64> = (0..99).map(|i| 0.01 + 0.98 * f64::from(i) / 98.0).collect();
    let g = Series::from_columns(vec![("x", grid.clone())]).unwrap();
    let sse: f64 = grid
        .iter()
        .enumerate()
        .map(|(r, x)| {
            let m = fit.row_model(&g, r).unwrap();
            let truth = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin();
            (m.params.scale.ln() - truth).powi(2)
        })
        .sum();
    let rmse = (sse / grid.len() as f64).sqrt();
    outcome(
        rmse < 0.1 && t < Duration::from_secs(30),
        format!("{} excesses, log-scale RMSE {rmse:.4}, {:.1}s", fit.n_v, secs(t)),
    )
}

/// Stationary GPD tail above 10 with a Beta(2,2) body of the given width below.
fn polluted_body_config(n: usize, body_width: f64) -> UnivariateConfig {
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
            sine: vec![],
            season2: 0.0,
        },
        shape: 0.05,
        thresholds: vec![10.0, 10.0],
        tail_prob: vec![0.2, 0.2],
        body_width,
        missing: 0.0,
        ..Default::default()
    }
}

fn eqd_correctness() -> Outcome {
    let candidates: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect();
    let spec = FitSpec::stationary("Y", 0.8);
    // a compact body two units wide, well inside one tail scale
    let cfg = polluted_body_config(5000, 2.0);
    let start = Instant::now();
    let chosen: Vec<f64> = (0..50u64)
        .map(|rep| {
            let data = synth::gen_univariate(&cfg, 100 + rep).unwrap();
            let opts = EqdOptions {
                n_boot: 100,
                seed: rep,
                ..Default::default()
            };
            eqd_select(&data, &spec, &candidates, &opts).unwrap().chosen
        })
        .collect();
    let t = start.elapsed();
    let ok = chosen.iter().filter(|&&c| c >= 0.8 - 1e-9).count();
    outcome(
        ok >= 45 && t < Duration::from_secs(300),
        format!("level >= 0.8 in {ok}/50 replicates, {:.1}s", secs(t)),
    )
}

fn scoring_exactness() -> Outcome {
    let cases = [(100.0, 100.0, 0.0), (100.0, 95.0, 3.6), (100.0, 105.0, 0.4)];
    let loss_err = cases
        .iter()
        .map(|&(q, qh, want)| (competition_loss(q, qh).unwrap() - want).abs())
        .fold(0.0, f64::max);
    let c = crps(|x: f64| x.clamp(0.0, 1.0), 0.5, 0.0, 1.0).unwrap();
    let crps_err = (c - 1.0 / 12.0).abs();
    outcome(
        loss_err <= 1e-12 && crps_err <= 1e-6,
        format!("max loss error {loss_err:.1e}, CRPS error {crps_err:.1e}"),
    )
}

fn marginal_consistency() -> Outcome {
    let mut cfg = polluted_body_config(21_000, 10.0);
    cfg.log_scale.linear = vec![("x".into(), 0.5)];
    cfg.log_scale.season2 = 0.3;
    cfg.thresholds = vec![40.0, 45.0];
    cfg.tail_prob = vec![0.2, 0.1];
    let data = synth::gen_univariate(&cfg, 8).unwrap();
    let spec = FitSpec::new(
        "Y",
        ThresholdSpec::Stepped {
            var: "season".into(),
            tau: 0.8,
        },
        Formula::parse("1 + lin(x) + ind(season==2)").unwrap(),
    );
    let start = Instant::now();
    let fit = fit_nonstationary_gpd(&spec, &data).unwrap();
    let prob = 0.9999;
    let q = MarginalModel::new(&fit, &data).unwrap().quantile(prob).unwrap();
    let models = fit.row_models(&data).unwrap();
    let n_sim = 10_000_000usize;
    let chunk = 1 << 16;
    let mut sims: Vec<f64> = (0..n_sim.div_ceil(chunk))
        .flat_map(|c| {
            let mut rng = rng_for(21, c as u64);
            let len = chunk.min(n_sim - c * chunk);
            (0..len)
                .map(|_| {
                    let m = &models[rng.random_range(0..models.len())];
                    fit.quantile_at(rng.random::<f64>(), m)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    numeric::sort_floats(&mut sims);
    let empirical = numeric::quantile_sorted(&sims, prob);
    let t = start.elapsed();
    let rel = (q - empirical).abs() / empirical;
    outcome(
        rel < 0.02 && t < Duration::from_secs(120),
        format!("module {q:.3}, simulated {empirical:.3}, rel diff {rel:.4}, {:.1}s", secs(t)),
    )
}

fn dependence_oracles() -> Outcome {
    let n = 100_000;
    let z = exp_columns(n, 3, 31);
    let como = vec![z[0].clone(), z[0].clone(), z[0].clone()];
    let uni_como = dependence::rank_transform(&como);
    let chi_como = chi_u(&uni_como, &[0, 1], 0.95).unwrap().estimate;
    let eta_ind = eta_u(&dependence::rank_transform(&z), &[0, 1], 0.95).unwrap().estimate;
    let cfg = TrivariateConfig {
        n,
        copula: Copula::Gaussian {
            rho: 0.5,
            rho_atmosphere: 0.0,
        },
        ..Default::default()
    };
    let g = synth::gen_trivariate(&cfg, 32).unwrap();
    let gcols = vec![g.column("Y1").unwrap().to_vec(), g.column("Y2").unwrap().to_vec()];
    let eta_gauss = eta_u(&dependence::rank_transform(&gcols), &[0, 1], 0.95).unwrap().estimate;
    let hill_eta = 1.0 / (2.0 * hill_lambda(&dependence::exponential_transform(&gcols), &[0.5, 0.5], 0.95).unwrap().lambda);
    let w = [1.0 / 3.0; 3];
    let lam_ind = hill_lambda(&z, &w, 0.95).unwrap().lambda;
    let lam_como = hill_lambda(&como, &w, 0.95).unwrap().lambda;
    let pass = chi_como == 1.0
        && (eta_ind - 0.5).abs() <= 0.05
        && (eta_gauss - 0.75).abs() <= 0.05
        && (lam_ind - 1.0).abs() <= 0.1
        && (lam_como - 1.0 / 3.0).abs() <= 0.05;
    outcome(
        pass,
        format!(
            "chi comonotone {chi_como}, eta independent {eta_ind:.4}, eta gaussian {eta_gauss:.4} \
             (Hill-based {hill_eta:.4}), lambda independent {lam_ind:.4}, lambda comonotone {lam_como:.4}"
        ),
    )
}

/// Share of replicates within a factor 2 of `e^-18`, for one config.
fn minproj_rate(cfg: &MinProjConfig, reps: u64) -> (usize, Vec<f64>) {
    let truth = (-18.0f64).exp();
    let ray = SimplexRay::from_levels(vec![6.0; 3], vec![6.0; 3]).unwrap();
    let n = 21_000;
    let cov = Series::from_columns(vec![("t", (0..n).map(|t| t as f64).collect())]).unwrap();
    let est: Vec<f64> = (0..reps)
        .map(|rep| {
            let z = exp_columns(n, 3, 700 + rep);
            let (fit, table, _) = select_tau(&z, &cov, &ray, &minproj::default_tau_grid(), cfg).unwrap();
            minproj::joint_survivor_probability(&fit, &table, ray.radius).unwrap()
        })
        .collect();
    let ok = est.iter().filter(|&&p| p / truth <= 2.0 && truth / p <= 2.0).count();
    (ok, est)
}

fn minproj_probability() -> Outcome {
    let start = Instant::now();
    let exponential = MinProjConfig {
        fixed_shape: Some(0.0),
        ..MinProjConfig::stationary()
    };
    let (ok, est) = minproj_rate(&exponential, 50);
    let t = start.elapsed();
    let (free_ok, _) = minproj_rate(&MinProjConfig::stationary(), 50);
    let (_, ray2) = build_challenge_rays(7.0, 7.0, -(2f64.ln().ln()), MarginScale::Gumbel).unwrap();
    let want = [0.4764, 0.4764, 0.0472];
    let ray_ok = ray2.omega.iter().zip(want).all(|(a, b)| (a - b).abs() < 5e-5);
    let (ray1, _) = build_challenge_rays(6.0, 7.0, 0.0, MarginScale::Gumbel).unwrap();
    let ray1_ok = ray1.omega.iter().all(|w| (w - 1.0 / 3.0).abs() < 5e-5);
    let med = numeric::quantile(&est, 0.5);
    outcome(
        ok >= 40 && ray_ok && ray1_ok && t < Duration::from_secs(300),
        format!(
            "exponential tail: {ok}/50 within factor 2 (median {med:.3e} vs {:.3e}), {:.1}s; \
             free shape: {free_ok}/50; omega2 {:.4?}",
            (-18.0f64).exp(),
            secs(t),
            ray2.omega
        ),
    )
}

fn condex_recovery() -> Outcome {
    let cfg = GroupedConfig {
        n: 100_000,
        groups: vec![vec![0, 1]],
        within: WithinGroup::ConditionalExtremes {
            alpha: 0.5,
            beta: 0.2,
            rho_z: 0.5,
        },
    };
    let w = synth::grouped_columns(&synth::gen_grouped(&cfg, 41).unwrap()).unwrap();
    let fit = fit_condext(&w, 0, 0.85).unwrap();
    let (a, b) = (fit.alpha[0], fit.beta[0]);
    let recovered = (a - 0.5).abs() <= 0.05 && (b - 0.2).abs() <= 0.1;

    let s = condex::laplace_level(1.0 / 300.0).unwrap();
    let mut rng = rng_for(42, 0);
    let lap: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            (0..100_000)
                .map(|_| MarginScale::Laplace.quantile(rng.random::<f64>()).unwrap())
                .collect()
        })
        .collect();
    let ind = fit_condext(&lap, 0, 0.85).unwrap();
    let p = group_exceedance_probability(&ind, &[s, s], 10_000_000, 43).unwrap().probability;
    let truth = (1.0f64 / 300.0).powi(2);
    let ind_ok = p / truth <= 2.0 && truth / p <= 2.0;

    let sweep: Vec<f64> = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
        .iter()
        .map(|&u| {
            let f = fit_condext(&w, 0, u).unwrap();
            group_exceedance_probability(&f, &[s, s], 1_000_000, 44).unwrap().probability
        })
        .collect();
    let hi = sweep.iter().copied().fold(0.0, f64::max);
    let lo = sweep.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = hi / lo;
    outcome(
        recovered && ind_ok && ratio <= 10.0,
        format!(
            "alpha {a:.4}, beta {b:.4}; independent pair {p:.3e} vs {truth:.3e}; sweep ratio {ratio:.2}"
        ),
    )
}

fn calibration_config(n: usize) -> UnivariateConfig {
    let mut cfg = polluted_body_config(n, 10.0);
    cfg.log_scale.linear = vec![("x".into(), 0.5)];
    cfg
}

fn lag1(x: &[f64]) -> f64 {
    let m = numeric::mean(x);
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    num / den
}

fn bootstrap_calibration() -> Outcome {
    let start = Instant::now();
    let cfg = calibration_config(6000);
    // threshold inside the GPD tail, which starts at the 0.8 level
    let spec = FitSpec::new("Y", ThresholdSpec::Constant { tau: 0.85 }, Formula::parse("1 + lin(x)").unwrap());
    let prob = 0.9999;
    let covered = (0..100u64)
        .filter(|&rep| {
            let data = synth::gen_univariate(&cfg, 900 + rep).unwrap();
            let row = 0;
            let truth = cfg.true_quantile(prob, &data, row).unwrap();
            let fit = fit_nonstationary_gpd(&spec, &data).unwrap();
            let bcfg = BootstrapConfig {
                n_boot: 100,
                seed: rep,
                ..Default::default()
            };
            let target = data.select_rows(&[row]);
            let b = resampling::semiparametric_response_bootstrap(&fit, &spec, &data, &bcfg, |f, _| {
                Ok(vec![f.conditional_quantile(prob, &target, 0)?])
            })
            .unwrap();
            let iv = &b.intervals().unwrap()[0];
            iv.lo50 <= truth && truth <= iv.hi50
        })
        .count();
    let coverage = covered as f64 / 100.0;

    let mut rng = rng_for(51, 0);
    let x = synth::ar1(10_000, 0.7, &mut rng);
    let src = lag1(&x);
    let rho_block: Vec<f64> = (0..20)
        .map(|r| {
            let idx = resampling::stationary_bootstrap_indices(x.len(), 50, &mut rng_for(52, r)).unwrap();
            lag1(&idx.iter().map(|&i| x[i]).collect::<Vec<_>>())
        })
        .collect();
    let block = numeric::mean(&rho_block);
    let idx = resampling::stationary_bootstrap_indices(x.len(), 1, &mut rng_for(53, 0)).unwrap();
    let iid = lag1(&idx.iter().map(|&i| x[i]).collect::<Vec<_>>());
    let t = start.elapsed();
    outcome(
        (0.35..=0.65).contains(&coverage)
            && (block - src).abs() <= 0.05
            && iid < 0.1
            && t < Duration::from_secs(1800),
        format!(
            "50% coverage {coverage:.2}; lag-1 source {src:.3}, block {block:.3}, iid {iid:.3}; {:.1}s",
            secs(t)
        ),
    )
}

fn clustering() -> Outcome {
    let sizes = [8usize, 8, 13, 9, 12];
    let mut label = Vec::new();
    for (k, &s) in sizes.iter().enumerate() {
        label.extend(std::iter::repeat_n(k, s));
    }
    // interleave the blocks so recovery does not rely on contiguous indices
    let mut rng = rng_for(61, 0);
    for i in (1..label.len()).rev() {
        label.swap(i, rng.random_range(0..=i));
    }
    let d = label.len();
    let chi: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| match (i == j, label[i] == label[j]) {
                    (true, _) => 1.0,
                    (false, true) => 0.4,
                    (false, false) => 0.02,
                })
                .collect()
        })
        .collect();
    let r = cluster_by_chi(&chi, 0.1).unwrap();
    let mut planted: Vec<Vec<usize>> = (0..sizes.len())
        .map(|k| (0..d).filter(|&i| label[i] == k).collect())
        .collect();
    planted.sort_by_key(|g| g[0]);
    let refs = reference_values();
    let back: ReferenceValues = serde_json::from_str(&serde_json::to_string(&refs).unwrap()).unwrap();
    outcome(
        r.groups == planted && back == refs,
        format!("{} groups recovered, fixture round trip {}", r.groups.len(), back == refs),
    )
}

fn determinism() -> Outcome {
    let mut c1 = C1Config::default();
    c1.synth.n = 6000;
    c1.n_targets = 5;
    c1.bootstrap.n_boot = 4;
    let mut c2 = C2Config::default();
    c2.synth.n = 6000;
    c2.bootstrap.n_boot = 4;
    let mut c3 = C3Config::default();
    c3.synth.n = 6000;
    c3.taus = vec![0.9, 0.95];
    c3.qq_sims = 20;
    let mut c4 = C4Config::default();
    c4.synth.n = 3000;
    c4.n_sim = 20_000;
    c4.n_boot = 4;
    let runs: Vec<(&str, Box<dyn Fn() -> String>)> = vec![
        ("c1", Box::new(move || workflow::run_c1(&c1, 3).unwrap().to_json().unwrap())),
        ("c2", Box::new(move || workflow::run_c2(&c2, 3).unwrap().to_json().unwrap())),
        ("c3", Box::new(move || workflow::run_c3(&c3, 3).unwrap().to_json().unwrap())),
        ("c4", Box::new(move || workflow::run_c4(&c4, 3).unwrap().to_json().unwrap())),
    ];
    let mut same = Vec::new();
    for (name, run) in &runs {
        if run() == run() {
            same.push(*name);
        }
    }
    outcome(same.len() == runs.len(), format!("identical reruns: {}", same.join(", ")))
}

fn main() {
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "GPD recovery", gpd_recovery),
        (2, "non-stationary scale recovery", scale_recovery),
        (3, "EQD threshold choice", eqd_correctness),
        (4, "loss and CRPS exactness", scoring_exactness),
        (5, "marginal Monte Carlo consistency", marginal_consistency),
        (6, "dependence oracles", dependence_oracles),
        (7, "min-projection probability", minproj_probability),
        (8, "conditional extremes recovery", condex_recovery),
        (9, "bootstrap calibration", bootstrap_calibration),
        (10, "clustering", clustering),
        (11, "determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut run = 0;
    for (k, name, check) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let o = check();
        println!("acceptance {k:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        run += 1;
        if !o.pass {
            failed.push(k);
        }
    }
    println!("acceptance summary: {} of {run} criteria passed", run - failed.len());
    if !failed.is_empty() {
        println!("acceptance failing: {failed:?}");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
