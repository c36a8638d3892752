//! Expected quantile discrepancy over a grid of threshold levels, then a
//! loss-augmented refit at the chosen level.

use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdSpec};
use extremes::synth::{gen_univariate, UnivariateConfig};
use extremes::threshold_select::{eqd_select, exponential_qq_loss, loss_augmented_refit, EqdOptions};

fn main() -> extremes::Result<()> {
    let cfg = UnivariateConfig {
        n: 5000,
        body_width: 2.0,
        missing: 0.0,
        ..UnivariateConfig::smooth_scale(5000, 0.05)
    };
    let data = gen_univariate(&cfg, 3)?;
    let spec = FitSpec::new("Y", ThresholdSpec::Constant { tau: 0.8 }, Formula::intercept());
    let candidates: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect();

    let r = eqd_select(&data, &spec, &candidates, &EqdOptions::default())?;
    for c in &r.candidates {
        let d = c.discrepancy.map_or("skipped".into(), |d| format!("{d:.4}"));
        println!("{:.2}  {d:>8}  n_v={}{}", c.level, c.n_excess, if c.chosen { "  <-" } else { "" });
    }

    let chosen = FitSpec {
        threshold: ThresholdSpec::Constant { tau: r.chosen },
        ..spec
    };
    let fit = fit_nonstationary_gpd(&chosen, &data)?;
    let refit = loss_augmented_refit(&fit, &data, 1.0)?;
    let loss = |f: &extremes::basis::GpdFit| f.transform_excesses_to_exponential(&data).map(|e| exponential_qq_loss(&e));
    println!("qq loss: fit {:.5}, refit {:.5}", loss(&fit)?, loss(&refit)?);
    Ok(())
}
