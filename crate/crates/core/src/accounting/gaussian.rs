//! The Gaussian mechanism: the standard closed-form ε for output
//! perturbation and the exact hockey-stick divergence of two equal-covariance
//! Gaussians.

use crate::stats::normal_cdf;

/// `ε = γ·Δ_A·√log(1.25/δ)` for noise `N(0, A⁻¹/γ)` and per-instance
/// sensitivity `Δ_A`.
///
/// The formula is kept exactly as stated. The privacy loss of the pair
/// depends on the Mahalanobis distance `√γ·Δ_A`, so for `γ < 1` this value
/// can fall below the exact calibration; [`gaussian_delta_exact`] gives the
/// ground truth.
pub fn gaussian_pdp(delta_a: f64, gamma: f64, delta: f64) -> f64 {
    gamma * delta_a * (1.25 / delta).ln().sqrt()
}

/// Hockey-stick divergence `δ(ε)` between `N(0, I)` and `N(v, I)` with
/// `‖v‖ = m`: `Φ(m/2 − ε/m) − e^ε·Φ(−m/2 − ε/m)`.
pub fn gaussian_delta_exact(mahalanobis: f64, eps: f64) -> f64 {
    let m = mahalanobis;
    if m <= 0.0 {
        return if eps >= 0.0 { 0.0 } else { 1.0 - eps.exp() };
    }
    let a = normal_cdf(m / 2.0 - eps / m);
    let tail = normal_cdf(-m / 2.0 - eps / m);
    let b = if tail > 0.0 { (eps + tail.ln()).exp() } else { 0.0 };
    (a - b).clamp(0.0, 1.0)
}

/// Smallest `ε ≥ 0` with `gaussian_delta_exact(m, ε) ≤ δ`, by bisection.
pub fn gaussian_eps_exact(mahalanobis: f64, delta: f64) -> f64 {
    if gaussian_delta_exact(mahalanobis, 0.0) <= delta {
        return 0.0;
    }
    let mut hi = 1.0;
    while gaussian_delta_exact(mahalanobis, hi) > delta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_delta_exact(mahalanobis, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}
