//! Marginal 200-year quantile from a seasonal model, against the planted truth.

use extremes::basis::{fit_nonstationary_gpd, FitSpec, Formula, ThresholdSpec};
use extremes::marginal::{return_period_probability, MarginalModel};
use extremes::synth::{gen_univariate, UnivariateConfig};
use extremes::workflow::true_marginal_quantile;

fn main() -> extremes::Result<()> {
    let cfg = UnivariateConfig {
        missing: 0.0,
        ..Default::default()
    };
    let data = gen_univariate(&cfg, 11)?;
    let spec = FitSpec::new(
        "Y",
        ThresholdSpec::Stepped {
            var: "season".into(),
            tau: 0.8,
        },
        Formula::parse("1 + lin(V3) + lin(V6) + crs(V2, B=6) + ind(season==2)")?,
    );
    let fit = fit_nonstationary_gpd(&spec, &data)?;
    let p = 1.0 - return_period_probability(200.0, cfg.calendar.days_per_year as f64);
    let q = MarginalModel::new(&fit, &data)?.quantile(p)?;
    println!("p = {p:.8}");
    println!("estimate {q:.2}, truth {:.2}", true_marginal_quantile(&cfg, &data, p)?);
    Ok(())
}
