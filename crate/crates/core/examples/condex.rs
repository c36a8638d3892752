//! Conditional extremes on Laplace margins: fit, then the probability that
//! every site in a group passes its yearly level.

use extremes::condex::{challenge_levels, fit_condext, group_exceedance_probability};
use extremes::series::Calendar;
use extremes::synth::{gen_grouped, grouped_columns, GroupedConfig, WithinGroup};

fn main() -> extremes::Result<()> {
    let cfg = GroupedConfig {
        n: 100_000,
        groups: vec![vec![0, 1, 2]],
        within: WithinGroup::ConditionalExtremes {
            alpha: 0.5,
            beta: 0.2,
            rho_z: 0.5,
        },
    };
    let w = grouped_columns(&gen_grouped(&cfg, 1)?)?;
    let fit = fit_condext(&w, 0, 0.9)?;
    println!("alpha {:?}", fit.alpha);
    println!("beta  {:?}", fit.beta);

    let (year, _) = challenge_levels(&Calendar::default())?;
    let g = group_exceedance_probability(&fit, &[year; 3], 1_000_000, 2)?;
    println!("P(all > {year:.3}) = {:.3e} ({} of {} simulations)", g.probability, g.hits, g.n_sim);
    Ok(())
}
