use extremes::gpd::{self, GpdParams};
use extremes::numeric::rng_for;
use proptest::prelude::*;
use rand_distr::{Distribution, Exp1};

fn p(scale: f64, shape: f64) -> GpdParams {
    GpdParams::new(scale, shape).unwrap()
}

#[test]
fn survival_values() {
    assert_eq!(gpd::survival(0.0, p(3.0, 0.4)).unwrap(), 1.0);
    assert!((gpd::survival(1.0, p(1.0, 0.0)).unwrap() - (-1f64).exp()).abs() < 1e-15);
    assert!((gpd::survival(2.0, p(1.0, 0.5)).unwrap() - 0.25).abs() < 1e-15);
    assert!(gpd::survival(-1.0, p(1.0, 0.0)).is_err());
    // bounded support for negative shape
    assert_eq!(gpd::survival(2.5, p(1.0, -0.5)).unwrap(), 0.0);
}

#[test]
fn quantile_values() {
    assert_eq!(gpd::quantile(0.0, p(1.0, 0.2)).unwrap(), 0.0);
    let e = 1.0 - (-1f64).exp();
    assert!((gpd::quantile(e, p(2.0, 0.0)).unwrap() - 2.0).abs() < 1e-12);
    assert!((gpd::quantile(0.75, p(1.0, 0.5)).unwrap() - 2.0).abs() < 1e-12);
    assert!(gpd::quantile(1.0, p(1.0, 0.5)).is_err());
    assert!(gpd::quantile(-0.1, p(1.0, 0.5)).is_err());
}

#[test]
fn exponential_sample_has_zero_shape() {
    let mut rng = rng_for(2, 0);
    let x: Vec<f64> = (0..10_000).map(|_| Exp1.sample(&mut rng)).collect();
    let fit = gpd::fit_mle(&x).unwrap();
    assert!(fit.params.shape.abs() < 0.05, "{:?}", fit.params);
}

#[test]
fn fit_errors() {
    assert!(gpd::fit_mle(&[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    assert!(gpd::fit_mle(&[2.0; 50]).is_err());
}

#[test]
fn fit_is_scale_equivariant() {
    let mut rng = rng_for(4, 0);
    let truth = p(1.5, 0.2);
    let x: Vec<f64> = (0..5000).map(|_| gpd::sample(&mut rng, truth)).collect();
    let a = gpd::fit_mle(&x).unwrap();
    let b = gpd::fit_mle(&x.iter().map(|v| 7.0 * v).collect::<Vec<_>>()).unwrap();
    assert!((b.params.scale / a.params.scale - 7.0).abs() < 1e-6 * 7.0);
    assert!((b.params.shape - a.params.shape).abs() < 1e-6);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = rng_for(5, 0);
    use rand::Rng;
    for _ in 0..100 {
        let y: f64 = rng.random_range(0.0..5.0);
        let ls: f64 = rng.random_range(-1.0..1.5);
        let sh: f64 = rng.random_range(-0.3..0.8);
        let Some((_, g0, g1)) = gpd::log_density_grad(y, ls, sh) else {
            continue;
        };
        let f = |a: f64, b: f64| gpd::log_density(y, GpdParams::new(a.exp(), b).unwrap());
        let h = 1e-6;
        let n0 = (f(ls + h, sh) - f(ls - h, sh)) / (2.0 * h);
        let n1 = (f(ls, sh + h) - f(ls, sh - h)) / (2.0 * h);
        assert!((g0 - n0).abs() <= 1e-5 * n0.abs().max(1.0), "{g0} {n0}");
        assert!((g1 - n1).abs() <= 1e-5 * n1.abs().max(1.0), "{g1} {n1}");
    }
}

proptest! {
    #[test]
    fn survival_non_increasing(y in 0.0f64..50.0, dy in 0.0f64..5.0, s in 0.1f64..10.0, xi in -0.9f64..2.0) {
        let q = p(s, xi);
        prop_assert!(gpd::survival(y + dy, q).unwrap() <= gpd::survival(y, q).unwrap());
    }

    #[test]
    fn continuous_across_zero_shape(y in 0.0f64..30.0, s in 0.1f64..10.0) {
        let a = gpd::survival(y, p(s, 1e-9)).unwrap();
        let b = gpd::survival(y, p(s, 0.0)).unwrap();
        prop_assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn quantile_inverts_survival(prob in 0.0f64..0.999_999, s in 0.1f64..10.0, xi in -0.9f64..2.0) {
        let q = p(s, xi);
        let x = gpd::quantile(prob, q).unwrap();
        prop_assert!((gpd::survival(x, q).unwrap() - (1.0 - prob)).abs() < 1e-10);
    }
}
