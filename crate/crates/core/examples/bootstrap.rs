//! Block-bootstrap interval for a conditional quantile.

use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdSpec};
use extremes::resampling::{semiparametric_response_bootstrap, BootstrapConfig};
use extremes::synth::{gen_univariate, UnivariateConfig};

fn main() -> extremes::Result<()> {
    let cfg = UnivariateConfig {
        n: 6000,
        missing: 0.0,
        ..UnivariateConfig::smooth_scale(6000, 0.05)
    };
    let data = gen_univariate(&cfg, 4)?;
    let spec = FitSpec::new("Y", ThresholdSpec::Constant { tau: 0.85 }, Formula::parse("1 + lin(x)")?);
    let fit = fit_nonstationary_gpd(&spec, &data)?;

    let row = 0;
    let prob = 0.999;
    let b = BootstrapConfig {
        n_boot: 100,
        block_mean: 50,
        ..Default::default()
    };
    let res = semiparametric_response_bootstrap(&fit, &spec, &data, &b, |f, _| {
        Ok(vec![f.conditional_quantile(prob, &data, row)?])
    })?;
    let iv = &res.intervals()?[0];
    println!("point  {:.2}", fit.conditional_quantile(prob, &data, row)?);
    println!("truth  {:.2}", cfg.true_quantile(prob, &data, row)?);
    println!("50%    [{:.2}, {:.2}]", iv.lo50, iv.hi50);
    println!("95%    [{:.2}, {:.2}]", iv.lo95, iv.hi95);
    println!("{} replicates, {} dropped", res.replicates.len(), res.dropped);
    Ok(())
}
