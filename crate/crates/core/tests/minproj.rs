use extremes::margins::MarginScale;
use extremes::minproj::{
    build_challenge_rays, fit_minproj, joint_survivor_probability, negate_third_margin, select_tau, MinProjConfig,
    SimplexRay,
};
use extremes::numeric;
use extremes::series::Series;
use extremes::Error;
use proptest::prelude::*;
use rand_distr::{Distribution, Exp1};

fn independent_exponentials(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Series) {
    let mut rng = numeric::rng_for(seed, 0);
    let cols = (0..d).map(|_| (0..n).map(|_| Exp1.sample(&mut rng)).collect()).collect();
    let cov = Series::from_columns(vec![("x", vec![0.0; n])]).unwrap();
    (cols, cov)
}

#[test]
fn challenge_rays() {
    let (a, b) = build_challenge_rays(3.0, 2.0, 0.5, MarginScale::Exponential).unwrap();
    assert_eq!(a.levels, vec![3.0; 3]);
    assert_eq!(a.radius, 9.0);
    assert!(a.omega.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    let em = -(-(-0.5f64).exp()).ln_1p();
    assert!((b.levels[2] - em).abs() < 1e-14);
    assert!((b.radius - (4.0 + em)).abs() < 1e-14);
    assert!((b.omega.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(b.targets, vec![2.0, 2.0, 0.5]);
    assert!(SimplexRay::from_levels(vec![0.0, 0.0], vec![]).is_err());
    assert!(SimplexRay::from_levels(vec![-1.0, 2.0], vec![]).is_err());
}

#[test]
fn stationary_fit_of_independent_exponentials() {
    let (cols, cov) = independent_exponentials(20_000, 3, 1);
    let ray = SimplexRay::from_levels(vec![1.0; 3], vec![]).unwrap();
    let (fit, table) = fit_minproj(&cols, &cov, &ray, 0.9, &MinProjConfig::stationary()).unwrap();
    let sigma = fit.gpd.scale_coef[0].exp();
    assert!((sigma - 1.0).abs() < 0.1, "sigma {sigma}");
    assert!(fit.gpd.shape.abs() < 0.05, "shape {}", fit.gpd.shape);
    let r = 5.0;
    let p = joint_survivor_probability(&fit, &table, r).unwrap();
    assert!((p / (-r).exp() - 1.0).abs() < 0.2, "{p} vs {}", (-r).exp());
    assert!(matches!(joint_survivor_probability(&fit, &table, 0.1), Err(Error::Precondition(_))));
}

#[test]
fn pinned_shape_is_kept() {
    let (cols, cov) = independent_exponentials(10_000, 2, 2);
    let ray = SimplexRay::from_levels(vec![1.0, 1.0], vec![]).unwrap();
    let cfg = MinProjConfig {
        fixed_shape: Some(0.0),
        ..MinProjConfig::stationary()
    };
    let (fit, table) = fit_minproj(&cols, &cov, &ray, 0.9, &cfg).unwrap();
    assert!(fit.gpd.shape_fixed && fit.gpd.shape == 0.0);
    let sigma = fit.gpd.scale_coef[0].exp();
    // Pinned exponential tail: the scale MLE is the mean excess.
    let t = table.column("T").unwrap();
    let u = fit.gpd.row_model(&table, 0).unwrap().threshold;
    let ex: Vec<f64> = t.iter().filter(|&&v| v > u).map(|v| v - u).collect();
    let mean = ex.iter().sum::<f64>() / ex.len() as f64;
    assert!((sigma / mean - 1.0).abs() < 1e-3, "{sigma} vs {mean}");
    let s = joint_survivor_probability(&fit, &table, u + 2.0).unwrap();
    assert!((s - 0.1 * (-2.0 / sigma).exp()).abs() < 1e-3 * s);
}

#[test]
fn tau_selection_reports_every_candidate() {
    let (cols, cov) = independent_exponentials(5_000, 2, 3);
    let ray = SimplexRay::from_levels(vec![1.0, 1.0], vec![]).unwrap();
    let (fit, _, diags) = select_tau(&cols, &cov, &ray, &[0.85, 0.9, 0.999], &MinProjConfig::stationary()).unwrap();
    assert_eq!(diags.len(), 3);
    assert!(diags[2].mean_abs_qq.is_none());
    let best = diags
        .iter()
        .filter_map(|d| d.mean_abs_qq.map(|m| (d.tau, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(fit.tau, best.0);
    assert!(select_tau(&cols, &cov, &ray, &[], &MinProjConfig::stationary()).is_err());
}

proptest! {
    #[test]
    fn negation_is_an_involution(z in 1e-6f64..30.0) {
        let back = negate_third_margin(negate_third_margin(z).unwrap()).unwrap();
        prop_assert!((back - z).abs() <= 1e-9 * z.max(1.0));
    }

    #[test]
    fn negation_maps_lower_to_upper_tail(z in 0.01f64..20.0) {
        // Pr(Z < z) = Pr(Z' > negate(z)) for standard exponentials.
        let lower = -(-z).exp_m1();
        let upper = (-negate_third_margin(z).unwrap()).exp();
        prop_assert!((lower - upper).abs() <= 1e-12);
    }
}
