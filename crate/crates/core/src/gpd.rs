//! Stationary generalized Pareto distribution: survival, quantile, density and
//! maximum-likelihood fitting on `(log σ, ξ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::optim::{self, BfgsOptions};

/// Below this magnitude the shape is treated as the exponential limit.
pub const SHAPE_ZERO: f64 = 1e-8;
/// Lower (exclusive) and upper (inclusive) bounds on the fitted shape.
pub const SHAPE_MIN: f64 = -1.0;
pub const SHAPE_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub scale: f64,
    pub shape: f64,
}

impl GpdParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("GPD scale must be positive, got {scale}")));
        }
        if !shape.is_finite() {
            return Err(Error::Domain(format!("GPD shape must be finite, got {shape}")));
        }
        Ok(GpdParams { scale, shape })
    }

    /// Upper end of the support (`+inf` unless the shape is negative).
    pub fn upper_endpoint(&self) -> f64 {
        if self.shape < -SHAPE_ZERO {
            -self.scale / self.shape
        } else {
            f64::INFINITY
        }
    }
}

/// `ln(1 + ξz) / ξ`, continuous through `ξ = 0`.
fn log1p_over_shape(shape: f64, z: f64) -> f64 {
    if shape.abs() < SHAPE_ZERO {
        z - shape * z * z / 2.0 + shape * shape * z * z * z / 3.0
    } else {
        (shape * z).ln_1p() / shape
    }
}

/// `ln S(y)`; `-inf` beyond a finite upper endpoint. Negative excesses give 0.
pub fn log_survival_unchecked(y: f64, p: GpdParams) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let z = y / p.scale;
    if p.shape.abs() >= SHAPE_ZERO && 1.0 + p.shape * z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -log1p_over_shape(p.shape, z)
}

pub fn survival_unchecked(y: f64, p: GpdParams) -> f64 {
    log_survival_unchecked(y, p).exp()
}

/// `(1 + ξy/σ)_+^{-1/ξ}`, or `exp(-y/σ)` in the exponential limit.
pub fn survival(y: f64, p: GpdParams) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::Domain(format!("GPD excess must be non-negative, got {y}")));
    }
    Ok(survival_unchecked(y, p))
}

/// Inverse of `1 - survival`.
pub fn quantile(prob: f64, p: GpdParams) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::Domain(format!("GPD quantile probability {prob} outside [0,1)")));
    }
    Ok(upper_quantile(1.0 - prob, p))
}

/// Excess with survival `q`, accurate for tiny `q`.
pub fn upper_quantile(q: f64, p: GpdParams) -> f64 {
    let log_q = q.ln();
    if p.shape.abs() < SHAPE_ZERO {
        -p.scale * log_q
    } else {
        p.scale * (-p.shape * log_q).exp_m1() / p.shape
    }
}

/// Log-density of an excess; `-inf` outside the support.
pub fn log_density(y: f64, p: GpdParams) -> f64 {
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = y / p.scale;
    let w = 1.0 + p.shape * z;
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -p.scale.ln() - log1p_over_shape(p.shape, z) - w.ln()
}

/// Log-density and its gradient in `(log σ, ξ)` for one excess.
/// Returns `None` outside the support.
pub fn log_density_grad(y: f64, log_scale: f64, shape: f64) -> Option<(f64, f64, f64)> {
    let scale = log_scale.exp();
    let z = y / scale;
    let w = 1.0 + shape * z;
    if w <= 0.0 || y < 0.0 {
        return None;
    }
    let lw = w.ln();
    let ll = -log_scale - log1p_over_shape(shape, z) - lw;
    let d_log_scale = -1.0 + (1.0 + shape) * z / w;
    let d_shape = if shape.abs() < 1e-6 {
        z * z / 2.0 - z + shape * (z * z - 2.0 * z * z * z / 3.0)
    } else {
        lw / (shape * shape) - (1.0 + 1.0 / shape) * z / w
    };
    Some((ll, d_log_scale, d_shape))
}

/// Probability-weighted-moment estimate, used to start the likelihood search.
pub fn pwm_estimate(excesses: &[f64]) -> GpdParams {
    let x = numeric::sorted(excesses);
    let n = x.len() as f64;
    let a0 = numeric::mean(&x);
    let a1 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 - (i as f64 + 1.0 - 0.35) / n) * v)
        .sum::<f64>()
        / n;
    let denom = a0 - 2.0 * a1;
    let fallback = GpdParams {
        scale: a0.max(f64::MIN_POSITIVE),
        shape: 0.0,
    };
    if !(denom > 0.0) {
        return fallback;
    }
    let shape = -(a0 / denom - 2.0);
    let scale = 2.0 * a0 * a1 / denom;
    let shape = shape.clamp(-0.9, 1.5);
    let max = x.last().copied().unwrap_or(0.0);
    if !(scale > 0.0) || (shape < 0.0 && 1.0 + shape * max / scale <= 1e-6) {
        return fallback;
    }
    GpdParams { scale, shape }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFitOptions {
    pub min_excesses: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for GpdFitOptions {
    fn default() -> Self {
        GpdFitOptions {
            min_excesses: 10,
            grad_tol: 1e-11,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdMle {
    pub params: GpdParams,
    pub log_likelihood: f64,
    /// Standard errors of (σ, ξ) from the observed information.
    pub std_errors: (f64, f64),
    pub n: usize,
    pub iterations: usize,
}

/// Mean negative log-likelihood and gradient over `(log σ, ξ)`.
pub fn mean_nll(excesses: &[f64], theta: &[f64]) -> (f64, Vec<f64>) {
    let (ls, sh) = (theta[0], theta[1]);
    if !(sh > SHAPE_MIN && sh <= SHAPE_MAX) {
        return (f64::INFINITY, vec![0.0, 0.0]);
    }
    let n = excesses.len() as f64;
    let mut f = 0.0;
    let (mut g0, mut g1) = (0.0, 0.0);
    for &y in excesses {
        match log_density_grad(y, ls, sh) {
            Some((ll, d0, d1)) => {
                f -= ll;
                g0 -= d0;
                g1 -= d1;
            }
            None => return (f64::INFINITY, vec![0.0, 0.0]),
        }
    }
    (f / n, vec![g0 / n, g1 / n])
}

pub fn fit_mle(excesses: &[f64]) -> Result<GpdMle> {
    fit_mle_with(excesses, GpdFitOptions::default())
}

pub fn fit_mle_with(excesses: &[f64], opts: GpdFitOptions) -> Result<GpdMle> {
    let n = excesses.len();
    if n < opts.min_excesses {
        return Err(Error::InsufficientData {
            needed: opts.min_excesses,
            got: n,
            context: "GPD excesses".into(),
        });
    }
    if excesses.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain("GPD excesses must be finite and non-negative".into()));
    }
    let first = excesses[0];
    if excesses.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("all excesses are equal".into()));
    }
    let start = pwm_estimate(excesses);
    let res = optim::bfgs(
        |t| mean_nll(excesses, t),
        &[start.scale.ln(), start.shape],
        BfgsOptions {
            max_iter: opts.max_iter,
            grad_tol: opts.grad_tol,
            f_tol: 1e-14,
            max_step: 0.5,
        },
    );
    if !res.converged && res.grad_norm > 1e-6 {
        return Err(Error::Fit(format!(
            "GPD likelihood did not converge after {} iterations (gradient norm {:.3e}, log σ = {:.4}, ξ = {:.4})",
            res.iterations, res.grad_norm, res.x[0], res.x[1]
        )));
    }
    let params = GpdParams::new(res.x[0].exp(), res.x[1])?;
    let hess = optim::hessian_from_gradient(|t| mean_nll(excesses, t).1, &res.x, 1e-5);
    let std_errors = invert2(&hess)
        .map(|v| {
            let nf = n as f64;
            ((v[0][0] / nf).sqrt() * params.scale, (v[1][1] / nf).sqrt())
        })
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(GpdMle {
        params,
        log_likelihood: -res.value * n as f64,
        std_errors,
        n,
        iterations: res.iterations,
    })
}

fn invert2(m: &[Vec<f64>]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) || m[0][0] <= 0.0 {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Draws one GPD excess by inversion.
pub fn sample<R: rand::Rng + ?Sized>(rng: &mut R, p: GpdParams) -> f64 {
    let u: f64 = rng.random::<f64>();
    upper_quantile(1.0 - u, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p(s: f64, x: f64) -> GpdParams {
        GpdParams::new(s, x).unwrap()
    }

    #[test]
    fn survival_examples() {
        assert_eq!(survival(0.0, p(3.0, 0.4)).unwrap(), 1.0);
        assert!((survival(1.0, p(1.0, 0.0)).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((survival(2.0, p(1.0, 0.5)).unwrap() - 0.25).abs() < 1e-15);
        assert!(survival(-0.1, p(1.0, 0.0)).is_err());
        // bounded support
        assert_eq!(survival(3.0, p(1.0, -0.5)).unwrap(), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(0.0, p(2.0, 0.3)).unwrap(), 0.0);
        let q = quantile(1.0 - (-1f64).exp(), p(2.0, 0.0)).unwrap();
        assert!((q - 2.0).abs() < 1e-12);
        assert!((quantile(0.75, p(1.0, 0.5)).unwrap() - 2.0).abs() < 1e-12);
        assert!(quantile(1.0, p(1.0, 0.0)).is_err());
        assert!(quantile(-0.1, p(1.0, 0.0)).is_err());
    }

    #[test]
    fn quantile_survival_round_trip() {
        let mut rng = numeric::rng_for(3, 0);
        for _ in 0..1000 {
            let prm = p(rng.random_range(0.1..5.0), rng.random_range(-0.9..1.5));
            let pr: f64 = rng.random_range(0.0..0.999_999);
            let y = quantile(pr, prm).unwrap();
            assert!((survival(y, prm).unwrap() - (1.0 - pr)).abs() < 1e-10);
        }
    }

    #[test]
    fn continuity_across_zero_shape() {
        for &y in &[0.1, 1.0, 5.0, 20.0] {
            let a = survival(y, p(1.3, 1e-9)).unwrap();
            let b = survival(y, p(1.3, 0.0)).unwrap();
            assert!((a - b).abs() < 1e-7);
            let c = survival(y, p(1.3, 2e-8)).unwrap();
            assert!((c - b).abs() < 1e-7);
        }
    }

    #[test]
    fn survival_non_increasing() {
        for &xi in &[-0.5, 0.0, 0.3, 1.2] {
            let mut prev = 1.0;
            for i in 0..500 {
                let s = survival(f64::from(i) * 0.02, p(0.7, xi)).unwrap();
                assert!(s <= prev);
                prev = s;
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = numeric::rng_for(5, 0);
        let mut checked = 0;
        while checked < 100 {
            let ls: f64 = rng.random_range(-1.0..1.5);
            let sh: f64 = if checked % 10 == 0 { rng.random_range(-1e-7..1e-7) } else { rng.random_range(-0.4..0.9) };
            let y: f64 = rng.random_range(0.0..6.0);
            let Some((_, d0, d1)) = log_density_grad(y, ls, sh) else { continue };
            let f = |a: f64, b: f64| log_density_grad(y, a, b).map(|r| r.0);
            let h = 1e-6;
            let (Some(fp0), Some(fm0), Some(fp1), Some(fm1)) = (f(ls + h, sh), f(ls - h, sh), f(ls, sh + h), f(ls, sh - h)) else {
                continue;
            };
            let n0 = (fp0 - fm0) / (2.0 * h);
            let n1 = (fp1 - fm1) / (2.0 * h);
            assert!((n0 - d0).abs() <= 1e-5 * d0.abs().max(1.0), "dlogσ {n0} vs {d0}");
            assert!((n1 - d1).abs() <= 1e-5 * d1.abs().max(1.0), "dξ {n1} vs {d1} at ξ={sh}");
            checked += 1;
        }
    }

    #[test]
    fn mle_recovers_truth() {
        let truth = p(2.0, 0.1);
        let mut rng = numeric::rng_for(17, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| sample(&mut rng, truth)).collect();
        let fit = fit_mle(&xs).unwrap();
        assert!((fit.params.scale - 2.0).abs() < 0.1, "{:?}", fit.params);
        assert!((fit.params.shape - 0.1).abs() < 0.05, "{:?}", fit.params);
        assert!((fit.params.scale - 2.0).abs() < 3.0 * fit.std_errors.0);
        assert!((fit.params.shape - 0.1).abs() < 3.0 * fit.std_errors.1);
    }

    #[test]
    fn mle_on_exponential_gives_zero_shape() {
        let mut rng = numeric::rng_for(19, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| -rng.random::<f64>().ln()).collect();
        let fit = fit_mle(&xs).unwrap();
        assert!(fit.params.shape.abs() < 0.05);
    }

    #[test]
    fn mle_preconditions() {
        assert!(matches!(fit_mle(&[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::InsufficientData { .. })));
        assert!(matches!(fit_mle(&[2.0; 50]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mle_scale_equivariant() {
        let mut rng = numeric::rng_for(23, 0);
        let xs: Vec<f64> = (0..3000).map(|_| sample(&mut rng, p(1.0, 0.2))).collect();
        let a = fit_mle(&xs).unwrap();
        let c = 7.5;
        let scaled: Vec<f64> = xs.iter().map(|v| v * c).collect();
        let b = fit_mle(&scaled).unwrap();
        assert!((b.params.scale / (c * a.params.scale) - 1.0).abs() < 1e-6);
        assert!((b.params.shape - a.params.shape).abs() < 1e-6);
    }
}
