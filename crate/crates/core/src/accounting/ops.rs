//! pDP and DP of one-posterior sampling for ridge regression.

use crate::data::DataPoint;
use crate::error::{Error, Result};
use crate::ridge::{LeveragePair, RidgeSolution};

/// The two per-instance bounds for OPS and their minimum.
///
/// `eps_out` is written in the out-of-sample leverage `μ` and the residual
/// of the fit without `z`; `eps_in` in the in-sample leverage `μ′` and the
/// residual of the fit with `z`. They are separately valid and generally
/// differ numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpsBound {
    pub eps_out: f64,
    pub eps_in: f64,
    pub eps: f64,
}

fn log_two_over_delta(delta: f64) -> Result<f64> {
    // The tail step needs log(2/δ) ≥ 1.
    if !(delta > 0.0 && delta <= 2.0 / std::f64::consts::E) {
        return Err(Error::param(format!("OPS bound needs 0 < delta <= 2/e, got {delta}")));
    }
    Ok((2.0 / delta).ln())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param(format!("gamma must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// Both bounds from a leverage pair, the out-of-sample residual
/// `r = y − xᵀθ̂` and the in-sample residual `r′ = y − xᵀθ̂′`.
pub fn ops_pdp_from_leverage(lev: LeveragePair, r_out: f64, r_in: f64, gamma: f64, delta: f64) -> Result<OpsBound> {
    check_gamma(gamma)?;
    let l = log_two_over_delta(delta)?;
    let LeveragePair { mu, mu_prime } = lev;
    let eps_out = 0.5 * (-(mu.ln_1p()) + gamma * mu / (1.0 + mu) * r_out * r_out).abs()
        + 0.5 * mu * l
        + (gamma * mu * l).sqrt() * r_out.abs();
    let eps_in = 0.5 * (-(-mu_prime).ln_1p() - gamma * mu_prime / (1.0 - mu_prime) * r_in * r_in).abs()
        + 0.5 * mu_prime * l
        + (gamma * mu_prime * l).sqrt() * r_in.abs();
    Ok(OpsBound { eps_out, eps_in, eps: eps_out.min(eps_in) })
}

/// A two-sided bound derived directly from the privacy loss
/// `L = log p(θ|Z) − log p(θ|Z′)`, with the tail threshold
/// `√(2·log(2/δ))` for a standard normal:
///
/// - under `θ ∼ p(·|Z)`: `L ≤ ½|−log(1+μ) + γμr²/(1+μ)| + μ·log(2/δ) + √(2γμ·log(2/δ))·|r|`;
/// - under `θ ∼ p(·|Z′)`: `−L ≤ ½(−log(1−μ′) + γμ′r′²/(1−μ′)) + √(2γμ′·log(2/δ))·|r′|`.
///
/// Returns the larger of the two. Used as a reference next to the
/// printed bounds, which can be exceeded at high leverage.
pub fn ops_pdp_two_sided(lev: LeveragePair, r_out: f64, r_in: f64, gamma: f64, delta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let l = log_two_over_delta(delta)?;
    let LeveragePair { mu, mu_prime } = lev;
    let forward = 0.5 * (-(mu.ln_1p()) + gamma * mu / (1.0 + mu) * r_out * r_out).abs()
        + mu * l
        + (2.0 * gamma * mu * l).sqrt() * r_out.abs();
    let backward = 0.5 * (-(-mu_prime).ln_1p() + gamma * mu_prime / (1.0 - mu_prime) * r_in * r_in)
        + (2.0 * gamma * mu_prime * l).sqrt() * r_in.abs();
    Ok(forward.max(backward))
}

/// OPS pDP for target `z` against the data set `Z` that `sol_without` was
/// fitted on, with `Z′ = [Z, z]`.
pub fn ops_pdp_bound(sol_without: &RidgeSolution, z: &DataPoint, gamma: f64, delta: f64) -> Result<OpsBound> {
    let lev = sol_without.leverage(&z.x)?;
    let r_out = sol_without.residual(z)?;
    let r_in = r_out / (1.0 + lev.mu);
    ops_pdp_from_leverage(lev, r_out, r_in, gamma, delta)
}

/// OPS pDP for a row `z` of the data set that `sol_with` was fitted on,
/// i.e. the pair `(Z ∖ z, z)`, without refitting.
pub fn ops_pdp_bound_in_sample(sol_with: &RidgeSolution, z: &DataPoint, gamma: f64, delta: f64) -> Result<OpsBound> {
    let mu_prime = sol_with.leverage(&z.x)?.mu;
    if !(mu_prime < 1.0) {
        return Err(Error::Singular { min_eigenvalue: 0.0 });
    }
    let r_in = sol_with.residual(z)?;
    let r_out = r_in / (1.0 - mu_prime);
    ops_pdp_from_leverage(LeveragePair::from_mu_prime(mu_prime), r_out, r_in, gamma, delta)
}

/// Data-agnostic pDP of OPS for `‖x‖ ≤ 1`:
/// `√(γL/(λ+λ_min))·|r| + γr²/(2·max{λ+λ_min, 1}) + γ(1+L)/(2(λ+λ_min))`,
/// `L = log(2/δ)`.
pub fn ops_pdp_agnostic(lambda: f64, lambda_min: f64, gamma: f64, delta: f64, residual: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let s = lambda + lambda_min;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param(format!("lambda + lambda_min must be positive, got {s}")));
    }
    let l = log_two_over_delta(delta)?;
    Ok((gamma * l / s).sqrt() * residual.abs()
        + gamma * residual * residual / (2.0 * s.max(1.0))
        + gamma * (1.0 + l) / (2.0 * s))
}

/// Worst-case DP of OPS over data sets of size `n` with `‖x‖ ≤ 1`, `|y| ≤ 1`:
/// `√(2(n+λ)γL/λ²) + 2(n+λ)γ/(λ·max{1,λ}) + γ(1+L)/(2λ)`.
pub fn ops_dp_agnostic(n: usize, lambda: f64, gamma: f64, delta: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("agnostic DP needs lambda > 0, got {lambda}")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::param(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    let l = log_two_over_delta(delta)?;
    let m = n as f64 + lambda;
    Ok((2.0 * m * gamma * l / (lambda * lambda)).sqrt()
        + 2.0 * m * gamma / (lambda * lambda.max(1.0))
        + gamma * (1.0 + l) / (2.0 * lambda))
}
