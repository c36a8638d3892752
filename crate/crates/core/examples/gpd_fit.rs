//! Stationary GPD fit to simulated excesses.

use extremes::gpd::{self, GpdParams};
use extremes::numeric;

fn main() -> extremes::Result<()> {
    let truth = GpdParams::new(2.0, 0.2)?;
    let mut rng = numeric::rng_for(1, 0);
    let z: Vec<f64> = (0..5000).map(|_| gpd::sample(&mut rng, truth)).collect();

    let start = gpd::pwm_estimate(&z);
    let mle = gpd::fit_mle(&z)?;
    println!("pwm:   scale {:.3} shape {:.3}", start.scale, start.shape);
    println!("mle:   scale {:.3} shape {:.3}", mle.params.scale, mle.params.shape);
    println!("truth: scale {:.3} shape {:.3}", truth.scale, truth.shape);
    println!("q(0.999) = {:.2}", gpd::quantile(0.999, mle.params)?);
    Ok(())
}
