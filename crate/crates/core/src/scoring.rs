//! Scores for comparing tail models: the asymmetric competition loss, CRPS
//! by quadrature and in closed form for GPD excesses, and information
//! criteria.

use crate::error::{Error, Result};
use crate::gpd::{self, GpdParams};
use crate::numeric;

/// Asymmetric loss with a ±1% dead band; under-estimates cost nine times
/// more than over-estimates.
pub fn competition_loss(q: f64, q_hat: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("true quantile must be positive, got {q}")));
    }
    Ok(competition_loss_unchecked(q, q_hat))
}

pub(crate) fn competition_loss_unchecked(q: f64, q_hat: f64) -> f64 {
    if 0.99 * q > q_hat {
        0.9 * (0.99 * q - q_hat)
    } else if 1.01 * q < q_hat {
        0.1 * (q_hat - 1.01 * q)
    } else {
        0.0
    }
}

const QUAD_ABS: f64 = 1e-10;
const QUAD_REL: f64 = 1e-10;

/// `∫ (F(x) - 1{x ≥ y})² dx` over `[lower, upper]` (either bound may be
/// infinite) by adaptive quadrature, split at `y`.
pub fn crps<F: Fn(f64) -> f64>(cdf: F, y: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower < upper) || lower.is_nan() || upper.is_nan() {
        return Err(Error::Argument(format!("bad integration bounds [{lower}, {upper}]")));
    }
    let below = |x: f64| cdf(x).powi(2);
    let above = |x: f64| (1.0 - cdf(x)).powi(2);
    let split = y.clamp(lower, upper);
    let left = if lower.is_infinite() {
        numeric::integrate_to_infinity(|t| below(split - t), 0.0, QUAD_ABS, QUAD_REL)?
    } else {
        numeric::integrate(below, lower, split, QUAD_ABS, QUAD_REL)?
    };
    let right = if upper.is_infinite() {
        numeric::integrate_to_infinity(above, split, QUAD_ABS, QUAD_REL)?
    } else {
        numeric::integrate(above, split, upper, QUAD_ABS, QUAD_REL)?
    };
    Ok(left + right)
}

/// `∫_a^b S(x)^k dx` for `k ∈ {1, 2}`.
fn survival_power_integral(a: f64, b: f64, p: GpdParams, k: i32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let kf = f64::from(k);
    let denom = kf - p.shape;
    if denom.abs() < 1e-6 {
        return numeric::integrate(
            |x| gpd::survival_unchecked(x, p).powi(k),
            a,
            b,
            1e-13,
            1e-11,
        )
        .unwrap_or(f64::NAN);
    }
    let term = |x: f64| -> f64 {
        if x.is_infinite() {
            return 0.0;
        }
        let s = gpd::survival_unchecked(x, p);
        if s == 0.0 {
            return 0.0;
        }
        let w = (1.0 + p.shape * x / p.scale).max(0.0);
        s.powi(k) * w
    };
    p.scale / denom * (term(a) - term(b))
}

/// CRPS of a GPD predictive distribution for an excess `z ≥ 0`, integrated
/// over `[0, upper]`.
pub fn gpd_crps_truncated(z: f64, p: GpdParams, upper: f64) -> f64 {
    let upper = upper.min(p.upper_endpoint());
    let zc = z.clamp(0.0, upper);
    // ∫_0^zc (1-S)² = zc - 2∫S + ∫S²
    let left = zc - 2.0 * survival_power_integral(0.0, zc, p, 1) + survival_power_integral(0.0, zc, p, 2);
    let right = survival_power_integral(zc, upper, p, 2);
    (left + right).max(0.0)
}

/// Truncation point used for tail-model CRPS: the `0.9999` excess quantile.
pub fn crps_upper(p: GpdParams) -> f64 {
    gpd::upper_quantile(1e-4, p)
}

/// Akaike and Bayesian information criteria from a log-likelihood and
/// effective degrees of freedom.
pub fn aic(log_likelihood: f64, edf: f64) -> f64 {
    -2.0 * log_likelihood + 2.0 * edf
}

pub fn bic(log_likelihood: f64, edf: f64, n: usize) -> f64 {
    -2.0 * log_likelihood + (n as f64).ln() * edf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_hand_values() {
        assert_eq!(competition_loss(100.0, 100.0).unwrap(), 0.0);
        assert!((competition_loss(100.0, 95.0).unwrap() - 3.6).abs() < 1e-12);
        assert!((competition_loss(100.0, 105.0).unwrap() - 0.4).abs() < 1e-12);
        assert!(competition_loss(0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_crps() {
        let c = crps(|x: f64| x.clamp(0.0, 1.0), 0.5, 0.0, 1.0).unwrap();
        assert!((c - 1.0 / 12.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_crps_at_zero() {
        let c = crps(|x: f64| 1.0 - (-x.max(0.0)).exp(), 0.0, 0.0, f64::INFINITY).unwrap();
        assert!((c - 0.5).abs() < 1e-8);
    }

    #[test]
    fn truncated_closed_form_matches_quadrature() {
        for &(s, xi, z) in &[(1.0, 0.0, 0.7), (2.0, 0.3, 5.0), (0.5, -0.4, 0.3), (1.3, 1.5, 2.0), (1.0, 0.2, 1e5)] {
            let p = GpdParams::new(s, xi).unwrap();
            let u = crps_upper(p);
            let closed = gpd_crps_truncated(z, p, u);
            let quad = crps(|x| 1.0 - gpd::survival_unchecked(x, p), z, 0.0, u).unwrap();
            assert!((closed - quad).abs() < 1e-7 * quad.max(1.0), "{s} {xi} {z}: {closed} vs {quad}");
        }
    }
}
