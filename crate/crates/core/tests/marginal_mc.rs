use extremes::basis::threshold::StepLevel;
use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdModel, ThresholdSpec};
use extremes::gpd::{self, GpdParams};
use extremes::marginal::{marginal_quantile, return_period_probability, MarginalModel};
use extremes::numeric;
use extremes::series::Series;
use extremes::Error;
use rand::Rng;

/// Two seasons with different thresholds and scales; 30% of season 1 and
/// 20% of season 2 exceed.
fn two_season_data(n: usize, seed: u64) -> Series {
    let mut rng = numeric::rng_for(seed, 0);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let season = if i % 3 == 0 { 2.0 } else { 1.0 };
        let (u, rate, sigma) = if season == 1.0 { (10.0, 0.3, 2.0) } else { (14.0, 0.2, 4.0) };
        let v = if rng.random::<f64>() < rate {
            u + gpd::sample(&mut rng, GpdParams::new(sigma, 0.1).unwrap())
        } else {
            u - 5.0 * rng.random::<f64>()
        };
        s.push(season);
        y.push(v);
    }
    Series::from_columns(vec![("y", y), ("s", s)]).unwrap()
}

fn two_season_spec() -> FitSpec {
    FitSpec::new(
        "y",
        ThresholdSpec::Fixed {
            model: ThresholdModel::Stepped {
                var: "s".into(),
                levels: vec![StepLevel { level: 1.0, value: 10.0 }, StepLevel { level: 2.0, value: 14.0 }],
            },
        },
        Formula::parse("1 + ind(s==2)").unwrap(),
    )
    .with_strata("s")
}

#[test]
fn constant_model_equals_conditional() {
    let mut rng = numeric::rng_for(4, 0);
    let y: Vec<f64> = (0..4000).map(|_| gpd::sample(&mut rng, GpdParams::new(1.5, 0.1).unwrap())).collect();
    let d = Series::from_columns(vec![("y", y)]).unwrap();
    let fit = fit_nonstationary_gpd(&FitSpec::stationary("y", 0.9), &d).unwrap();
    let m = MarginalModel::new(&fit, &d).unwrap();
    for p in [0.95, 0.99, 0.9999] {
        let a = m.quantile(p).unwrap();
        let b = fit.conditional_quantile(p, &d, 17).unwrap();
        assert!((a - b).abs() <= 1e-9 * b.abs(), "{p}: {a} vs {b}");
    }
}

#[test]
fn two_stratum_mixture_matches_closed_form() {
    let d = two_season_data(6000, 8);
    let fit = fit_nonstationary_gpd(&two_season_spec(), &d).unwrap();
    let m = MarginalModel::new(&fit, &d).unwrap();
    let n = d.n_rows() as f64;
    let b = &fit.scale_coef;
    let xi = fit.shape;
    let oracle = |y: f64| {
        fit.strata
            .iter()
            .map(|st| {
                let (u, ls) = if st.level == Some(1.0) { (10.0, b[0]) } else { (14.0, b[0] + b[1]) };
                let t = 1.0 + xi * (y - u) / ls.exp();
                st.n as f64 / n * st.rate * t.powf(-1.0 / xi)
            })
            .sum::<f64>()
    };
    for y in [14.0, 15.5, 20.0, 40.0, 100.0] {
        let s = m.survival(y).unwrap();
        assert!((s - oracle(y)).abs() < 1e-10, "y={y}: {s} vs {}", oracle(y));
    }
    assert!(matches!(m.survival(12.0), Err(Error::Domain(_))));
}

#[test]
fn quantile_inverts_cdf() {
    let d = two_season_data(6000, 9);
    let fit = fit_nonstationary_gpd(&two_season_spec(), &d).unwrap();
    let m = MarginalModel::new(&fit, &d).unwrap();
    for p in [0.999, 0.9999, 1.0 - return_period_probability(200.0, 300.0)] {
        let q = m.quantile(p).unwrap();
        let c = m.cdf(q).unwrap();
        assert!(((1.0 - c) / (1.0 - p) - 1.0).abs() < 1e-8, "{p}: cdf(q) = {c}");
    }
    let q = marginal_quantile(&fit, &d, 0.9999).unwrap();
    assert_eq!(q, m.quantile(0.9999).unwrap());
    assert!(m.quantile(0.5).is_err());
    assert!(m.quantile(1.0).is_err());
}

#[test]
fn cdf_is_monotone() {
    let d = two_season_data(3000, 10);
    let fit = fit_nonstationary_gpd(&two_season_spec(), &d).unwrap();
    let m = MarginalModel::new(&fit, &d).unwrap();
    let mut prev = 0.0;
    for i in 0..400 {
        let c = m.cdf(14.0 + 0.25 * f64::from(i)).unwrap();
        assert!(c >= prev && c <= 1.0);
        prev = c;
    }
}

#[test]
fn return_period_probability_value() {
    assert_eq!(return_period_probability(200.0, 300.0), 1.0 / 60000.0);
}
