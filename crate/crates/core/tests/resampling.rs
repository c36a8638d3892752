use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdSpec};
use extremes::condex::{fit_condext, laplace_transform};
use extremes::numeric;
use extremes::resampling::{
    block_lengths, parametric_bootstrap_condex, percentile_interval, semiparametric_response_bootstrap,
    stationary_bootstrap_indices, BootstrapConfig, CovariateMode,
};
use extremes::synth::{gen_univariate, UnivariateConfig};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn mean_block_length() {
    for l in [5usize, 50] {
        let mut rng = numeric::rng_for(1, l as u64);
        let b = block_lengths(l, 20_000, &mut rng).unwrap();
        let m = b.iter().sum::<usize>() as f64 / b.len() as f64;
        assert!((m / l as f64 - 1.0).abs() < 0.05, "l={l}: {m}");
        assert!(b.iter().all(|&v| v >= 1));
    }
}

#[test]
fn long_blocks_are_circular_shifts() {
    // With l much larger than n almost every resample is one wrapped block.
    let n = 50;
    let mut whole = 0;
    for r in 0..200 {
        let mut rng = numeric::rng_for(2, r);
        let idx = stationary_bootstrap_indices(n, 1_000_000, &mut rng).unwrap();
        if idx.windows(2).all(|w| w[1] == (w[0] + 1) % n) {
            whole += 1;
        }
    }
    assert!(whole >= 198, "{whole}");
}

#[test]
fn break_rate_is_one_over_l() {
    let n = 200_000;
    let l = 20;
    let mut rng = numeric::rng_for(3, 0);
    let idx = stationary_bootstrap_indices(n, l, &mut rng).unwrap();
    assert_eq!(idx.len(), n);
    assert!(idx.iter().all(|&i| i < n));
    let breaks = idx.windows(2).filter(|w| w[1] != (w[0] + 1) % n).count() as f64 / (n - 1) as f64;
    // a new block can start at the successor by chance, with probability 1/n
    assert!((breaks * l as f64 - 1.0).abs() < 0.05, "{breaks}");
}

fn small_data() -> extremes::series::Series {
    let cfg = UnivariateConfig {
        n: 3000,
        missing: 0.0,
        ..UnivariateConfig::smooth_scale(3000, 0.05)
    };
    gen_univariate(&cfg, 4).unwrap()
}

fn small_spec() -> FitSpec {
    FitSpec::new("Y", ThresholdSpec::Constant { tau: 0.85 }, Formula::parse("1 + lin(x)").unwrap())
}

#[test]
fn response_bootstrap_replicate_count_and_determinism() {
    let d = small_data();
    let spec = small_spec();
    let fit = fit_nonstationary_gpd(&spec, &d).unwrap();
    let cfg = BootstrapConfig {
        n_boot: 100,
        seed: 11,
        ..Default::default()
    };
    let est = |f: &extremes::basis::GpdFit, _: &extremes::series::Series| Ok(vec![f.shape, f.scale_coef[1]]);
    let a = semiparametric_response_bootstrap(&fit, &spec, &d, &cfg, est).unwrap();
    assert_eq!(a.replicates.len() + a.dropped, 100);
    assert_eq!(a.dropped, 0);
    let b = semiparametric_response_bootstrap(&fit, &spec, &d, &cfg, est).unwrap();
    assert_eq!(a.replicates, b.replicates);
    let iv = a.intervals().unwrap();
    assert_eq!(iv.len(), 2);
    assert!(iv[0].lo95 < fit.shape && fit.shape < iv[0].hi95);
    let zero = BootstrapConfig { n_boot: 0, ..cfg };
    assert!(semiparametric_response_bootstrap(&fit, &spec, &d, &zero, est).is_err());
}

#[test]
fn fixed_covariates_stay_in_place() {
    let d = small_data();
    let spec = small_spec();
    let fit = fit_nonstationary_gpd(&spec, &d).unwrap();
    let cfg = BootstrapConfig {
        n_boot: 5,
        covariates: CovariateMode::Fixed,
        ..Default::default()
    };
    let x0 = d.column("x").unwrap().to_vec();
    let r = semiparametric_response_bootstrap(&fit, &spec, &d, &cfg, |_, boot| {
        Ok(vec![f64::from(u8::from(boot.column("x")? == x0.as_slice()))])
    })
    .unwrap();
    assert!(r.replicates.iter().all(|v| v[0] == 1.0));
}

#[test]
fn parametric_condex_bootstrap() {
    let mut rng = numeric::rng_for(5, 0);
    let n = 5000;
    let mut cols = (0..2).map(|_| Vec::with_capacity(n)).collect::<Vec<Vec<f64>>>();
    for _ in 0..n {
        let c: f64 = StandardNormal.sample(&mut rng);
        for col in cols.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            col.push(0.8f64.sqrt() * c + 0.2f64.sqrt() * e);
        }
    }
    let fit = fit_condext(&laplace_transform(&cols), 0, 0.9).unwrap();
    let a = parametric_bootstrap_condex(&fit, &[4.0, 4.0], 10_000, 20, 1).unwrap();
    let b = parametric_bootstrap_condex(&fit, &[4.0, 4.0], 10_000, 20, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.estimates.len() + a.dropped, 20);
    assert!(a.estimates.iter().all(|p| *p > 0.0 && *p <= (-4.0f64).exp() / 2.0));
    let mut empty = fit.clone();
    empty.residuals.clear();
    assert!(parametric_bootstrap_condex(&empty, &[4.0, 4.0], 100, 2, 1).is_err());
}

#[test]
fn interval_of_nothing_fails() {
    assert!(percentile_interval(&[f64::NAN]).is_err());
}

proptest! {
    #[test]
    fn indices_have_length_n(n in 0usize..500, l in 1usize..100, seed in 0u64..50) {
        let mut rng = numeric::rng_for(seed, 0);
        let idx = stationary_bootstrap_indices(n, l, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.iter().all(|&i| i < n));
    }
}
