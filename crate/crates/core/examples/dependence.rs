//! χ, η and min-projection rates for the trivariate generators, next to
//! their known limits.

use extremes::dependence::{chi_u, eta_u, exponential_transform, hill_lambda, rank_transform};
use extremes::synth::{gen_trivariate, Copula, TrivariateConfig};

fn main() -> extremes::Result<()> {
    let copulas = [
        ("independent", Copula::Independent),
        ("gaussian 0.5", Copula::Gaussian { rho: 0.5, rho_atmosphere: 0.0 }),
        ("logistic 0.5", Copula::Logistic { alpha: 0.5 }),
    ];
    println!("{:14} {:>7} {:>7} {:>7}   (limits)", "copula", "chi", "eta", "lambda");
    for (name, copula) in copulas {
        let cfg = TrivariateConfig {
            n: 50_000,
            copula,
            ..Default::default()
        };
        let d = gen_trivariate(&cfg, 2)?;
        let cols: Vec<Vec<f64>> = ["Y1", "Y2", "Y3"].iter().map(|c| d.column(c).map(<[f64]>::to_vec)).collect::<Result<_, _>>()?;
        let u = rank_transform(&cols);
        let chi = chi_u(&u, &[0, 1], 0.98)?.estimate;
        let eta = eta_u(&u, &[0, 1], 0.98)?.estimate;
        let lam = hill_lambda(&exponential_transform(&cols), &[1.0 / 3.0; 3], 0.95)?.lambda;
        let t = copula.truth();
        println!("{name:14} {chi:7.3} {eta:7.3} {lam:7.3}   ({:.3}, {:.3}, {:.3})", t.chi, t.eta, t.lambda_center);
    }
    Ok(())
}
