//! The four end-to-end analyses at reduced size. Each prints its JSON report.

use extremes::basis::{FitSpec, Formula, Smoothing, ThresholdSpec};
use extremes::resampling::BootstrapConfig;
use extremes::synth::{GroupedConfig, TrivariateConfig, UnivariateConfig};
use extremes::workflow::{run_c1, run_c2, run_c3, run_c4, C1Config, C2Config, C3Config, C4Config};

fn main() -> extremes::Result<()> {
    let synth = UnivariateConfig {
        n: 6000,
        ..Default::default()
    };
    let fit = FitSpec::new(
        "Y",
        ThresholdSpec::Stepped {
            var: "season".into(),
            tau: 0.8,
        },
        Formula::parse("1 + lin(V3) + ind(season==2)")?,
    )
    .with_smoothing(Smoothing::Fixed { lambdas: vec![1.0] });
    let boot = BootstrapConfig {
        n_boot: 10,
        ..Default::default()
    };

    let c1 = C1Config {
        synth: synth.clone(),
        fit: fit.clone(),
        n_targets: 5,
        bootstrap: boot.clone(),
        ..Default::default()
    };
    print!("{}", run_c1(&c1, 1)?.to_json()?);

    let c2 = C2Config {
        synth,
        fit,
        bootstrap: boot,
        ..Default::default()
    };
    print!("{}", run_c2(&c2, 1)?.to_json()?);

    let c3 = C3Config {
        synth: TrivariateConfig {
            n: 6000,
            ..Default::default()
        },
        taus: vec![0.9, 0.95],
        ..Default::default()
    };
    print!("{}", run_c3(&c3, 1)?.to_json()?);

    let c4 = C4Config {
        synth: GroupedConfig {
            n: 3000,
            ..Default::default()
        },
        // short series: χ noise between independent sites reaches the default link
        link: 0.2,
        n_sim: 20_000,
        n_boot: 5,
        ..Default::default()
    };
    print!("{}", run_c4(&c4, 1)?.to_json()?);
    Ok(())
}
