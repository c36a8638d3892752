use extremes::gpd::{self, GpdParams};
use extremes::margins::{empirical_cdf, transform, MarginScale, SemiParametricCdf};
use proptest::prelude::*;

const SCALES: [MarginScale; 4] = [
    MarginScale::Uniform,
    MarginScale::Exponential,
    MarginScale::Gumbel,
    MarginScale::Laplace,
];

#[test]
fn gumbel_to_exponential_levels() {
    // -ln(1 - G(7)) with G the Gumbel CDF exp(-exp(-x))
    let direct = -(-(-(-7f64).exp()).exp_m1()).ln();
    let v = transform(7.0, MarginScale::Gumbel, MarginScale::Exponential).unwrap();
    assert!((v - direct).abs() < 1e-12);
    assert_eq!((v * 1e4).round() / 1e4, 7.0005);

    let m = -(2f64.ln().ln());
    let e = transform(m, MarginScale::Gumbel, MarginScale::Exponential).unwrap();
    assert!((e - 2f64.ln()).abs() < 1e-12);

    assert_eq!(transform(0.5, MarginScale::Uniform, MarginScale::Laplace).unwrap(), 0.0);
}

#[test]
fn rejects_bad_inputs() {
    assert!(transform(f64::NAN, MarginScale::Gumbel, MarginScale::Laplace).is_err());
    assert!(transform(1.5, MarginScale::Uniform, MarginScale::Laplace).is_err());
    assert!(transform(-0.1, MarginScale::Uniform, MarginScale::Gumbel).is_err());
    assert!(empirical_cdf(&[], 1.0).is_err());
}

#[test]
fn empirical_ranks() {
    assert_eq!(empirical_cdf(&[1.0, 2.0, 3.0], 2.0).unwrap(), 0.5);
    assert_eq!(empirical_cdf(&[5.0], 5.0).unwrap(), 0.5);
    let s: Vec<f64> = (1..=99).map(f64::from).collect();
    assert!((empirical_cdf(&s, 99.0).unwrap() - 0.99).abs() < 1e-15);
}

#[test]
fn semiparametric_junction_and_median() {
    let sample: Vec<f64> = (1..=1000).map(|i| f64::from(i) / 10.0).collect();
    let tail = GpdParams::new(3.0, 0.2).unwrap();
    let c = SemiParametricCdf::from_parts(&sample, 90.0, tail).unwrap();
    let zeta = c.tail_fraction();
    assert!((c.cdf(90.0) - (1.0 - zeta)).abs() < 1e-12);
    let med = gpd::quantile(0.5, tail).unwrap();
    assert!((c.cdf(90.0 + med) - (1.0 - zeta / 2.0)).abs() < 1e-12);
    assert!(c.cdf(-1e12) < 1e-3);
    let grid: Vec<f64> = (0..10_000).map(|i| -10.0 + f64::from(i) * 0.02).collect();
    assert!(grid.windows(2).all(|w| c.cdf(w[0]) <= c.cdf(w[1])));
}

fn interior(scale: MarginScale, u: f64) -> f64 {
    scale.quantile(u).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(u in 1e-6f64..1.0 - 1e-6, a in 0usize..4, b in 0usize..4) {
        let (from, to) = (SCALES[a], SCALES[b]);
        let x = interior(from, u);
        let back = transform(transform(x, from, to).unwrap(), to, from).unwrap();
        prop_assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0));
    }

    #[test]
    fn order_preserving(u1 in 1e-6f64..0.999, du in 1e-6f64..1e-3, a in 0usize..4, b in 0usize..4) {
        let (from, to) = (SCALES[a], SCALES[b]);
        let x1 = interior(from, u1);
        let x2 = interior(from, (u1 + du).min(1.0 - 1e-7));
        prop_assert!(transform(x1, from, to).unwrap() <= transform(x2, from, to).unwrap());
    }
}
