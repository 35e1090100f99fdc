//! Composition and group privacy for (ε, δ) budgets.

use crate::error::{Error, Result};

/// An (ε, δ) budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PdpBudget {
    /// Validated constructor: `ε ≥ 0`, `0 ≤ δ < 1`.
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || eps.is_nan() {
            return Err(Error::param(format!("eps must be nonnegative, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { eps, delta })
    }
}

/// `(Σεᵢ, Σδᵢ)`. Summed δ may reach 1, which is a vacuous guarantee.
pub fn compose_simple(budgets: &[PdpBudget]) -> PdpBudget {
    PdpBudget {
        eps: budgets.iter().map(|b| b.eps).sum(),
        delta: budgets.iter().map(|b| b.delta).sum(),
    }
}

/// Advanced composition of `k` copies of an (ε, δ) mechanism:
/// `ε′ = √(2k·ln(1/δ′))·ε + kε(e^ε − 1)`, `δ′_total = kδ + δ′`.
pub fn compose_advanced(eps: f64, delta: f64, k: usize, delta_slack: f64) -> PdpBudget {
    let kf = k as f64;
    let eps_total = if k == 0 { 0.0 } else { (2.0 * kf * (1.0 / delta_slack).ln()).sqrt() * eps + kf * eps * eps.exp_m1() };
    PdpBudget { eps: eps_total, delta: kf * delta + delta_slack }
}

/// Group privacy for a group of targets protected at `(εᵢ, δᵢ)`:
/// `(Σεᵢ, Σᵢ δᵢ·Π_{j<i} e^{εⱼ})`.
pub fn group_privacy(eps_seq: &[f64], delta_seq: &[f64]) -> Result<PdpBudget> {
    if eps_seq.len() != delta_seq.len() {
        return Err(Error::Dimension { expected: eps_seq.len(), found: delta_seq.len() });
    }
    let mut eps = 0.0f64;
    let mut delta = 0.0;
    for (&e, &d) in eps_seq.iter().zip(delta_seq) {
        delta += d * eps.exp();
        eps += e;
    }
    Ok(PdpBudget { eps, delta })
}
