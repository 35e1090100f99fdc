//! Monte-Carlo estimate of the hockey-stick divergence between two
//! Gaussians, used to certify analytical (ε, δ) bounds.
//!
//! For `θ ∼ P` and the exact privacy loss `L(θ) = log p(θ) − log q(θ)`,
//! `δ_P(ε) = E_P[max(0, 1 − e^{ε − L})]`. Both orders `(P, Q)` and `(Q, P)`
//! are estimated.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ridge::guarded_cholesky;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Matrix, Vector};

const SHARDS: usize = 64;

/// A multivariate normal held as `θ = mean + Fξ` with whitening `W`
/// (`‖W(θ − mean)‖² = (θ − mean)ᵀΣ⁻¹(θ − mean)`).
#[derive(Debug, Clone)]
pub struct GaussianLaw {
    mean: Vector,
    cov: Matrix,
    factor: Matrix,
    whitening: Matrix,
    log_det_cov: f64,
}

impl GaussianLaw {
    pub fn from_covariance(mean: Vector, cov: &Matrix) -> Result<Self> {
        Self::check_dims(&mean, cov)?;
        let chol = guarded_cholesky(cov)?;
        let l = chol.l();
        let whitening = l
            .clone()
            .solve_lower_triangular(&Matrix::identity(mean.len(), mean.len()))
            .ok_or(Error::Singular { min_eigenvalue: 0.0 })?;
        Ok(Self { log_det_cov: chol.ln_determinant(), cov: cov.clone(), factor: l, whitening, mean })
    }

    /// The law `N(mean, P⁻¹)` for a precision matrix `P`.
    pub fn from_precision(mean: Vector, precision: &Matrix) -> Result<Self> {
        Self::check_dims(&mean, precision)?;
        let chol = guarded_cholesky(precision)?;
        let lt = chol.l().transpose();
        let factor = lt
            .solve_upper_triangular(&Matrix::identity(mean.len(), mean.len()))
            .ok_or(Error::Singular { min_eigenvalue: 0.0 })?;
        let cov = crate::ridge::symmetrize(&factor * factor.transpose());
        Ok(Self { log_det_cov: -chol.ln_determinant(), cov, factor, whitening: lt, mean })
    }

    fn check_dims(mean: &Vector, m: &Matrix) -> Result<()> {
        if m.nrows() != mean.len() || m.ncols() != mean.len() {
            return Err(Error::Dimension { expected: mean.len(), found: m.nrows() });
        }
        Ok(())
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Result of one Monte-Carlo certification at a fixed ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McVerdict {
    pub eps_tested: f64,
    /// Estimated divergence for `(P, Q)` and `(Q, P)`.
    pub delta_hat: [f64; 2],
    pub stderr: [f64; 2],
    /// Samples per direction.
    pub n_samples: usize,
}

impl McVerdict {
    pub fn delta_hat_max(&self) -> f64 {
        self.delta_hat[0].max(self.delta_hat[1])
    }

    /// `δ̂ ≤ δ + 3·stderr` in both directions.
    pub fn passes(&self, delta_target: f64) -> bool {
        self.passes_with(delta_target, 3.0)
    }

    pub fn passes_with(&self, delta_target: f64, k: f64) -> bool {
        (0..2).all(|j| self.delta_hat[j] <= delta_target + k * self.stderr[j])
    }

    /// The direction with the larger estimate, as (δ̂, stderr).
    pub fn worst(&self) -> (f64, f64) {
        let j = if self.delta_hat[1] > self.delta_hat[0] { 1 } else { 0 };
        (self.delta_hat[j], self.stderr[j])
    }
}

/// Certifies `eps` for the pair `N(mean1, cov1)`, `N(mean2, cov2)`.
pub fn verify_pdp_mc(
    mean1: &Vector,
    cov1: &Matrix,
    mean2: &Vector,
    cov2: &Matrix,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McVerdict> {
    let p = GaussianLaw::from_covariance(mean1.clone(), cov1)?;
    let q = GaussianLaw::from_covariance(mean2.clone(), cov2)?;
    Ok(verify_pdp_mc_multi(&p, &q, &[eps], n_samples, seed)?[0])
}

/// Like [`verify_pdp_mc`] for several ε values sharing one set of draws.
pub fn verify_pdp_mc_multi(
    p: &GaussianLaw,
    q: &GaussianLaw,
    eps: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McVerdict>> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension { expected: p.dim(), found: q.dim() });
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples must be positive"));
    }
    let identical = p.mean == q.mean && p.cov == q.cov;
    let forward = direction_sums(p, q, eps, n_samples, derive_seed(seed, 0), identical);
    let backward = direction_sums(q, p, eps, n_samples, derive_seed(seed, 1), identical);
    let nf = n_samples as f64;
    let finish = |(s, s2): (f64, f64)| {
        let mean = s / nf;
        let var = if n_samples > 1 { ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
        (mean.clamp(0.0, 1.0), (var / nf).sqrt())
    };
    Ok(eps
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let (d0, s0) = finish(forward[k]);
            let (d1, s1) = finish(backward[k]);
            McVerdict { eps_tested: e, delta_hat: [d0, d1], stderr: [s0, s1], n_samples }
        })
        .collect())
}

/// Per-ε `(Σt, Σt²)` of `t = max(0, 1 − e^{ε−L})` over `θ ∼ from`.
fn direction_sums(
    from: &GaussianLaw,
    to: &GaussianLaw,
    eps: &[f64],
    n_samples: usize,
    seed: u64,
    identical: bool,
) -> Vec<(f64, f64)> {
    let d = from.dim();
    // W_to(θ − m_to) = Bξ + c for θ = m_from + F_from ξ.
    let b = &to.whitening * &from.factor;
    let c = &to.whitening * (&from.mean - &to.mean);
    let log_det_half = 0.5 * (to.log_det_cov - from.log_det_cov);
    let b_rows: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| b[(i, j)]).collect();
    let c: Vec<f64> = c.iter().copied().collect();

    let shards = SHARDS.min(n_samples);
    let per_shard: Vec<Vec<(f64, f64)>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = n_samples / shards + usize::from(s < n_samples % shards);
            let mut rng = rng_from_seed(derive_seed(seed, s as u64));
            let mut acc = vec![(0.0, 0.0); eps.len()];
            let mut xi = vec![0.0; d];
            for _ in 0..count {
                let mut self_q = 0.0;
                for v in xi.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    self_q += *v * *v;
                }
                let loss = if identical {
                    0.0
                } else {
                    let mut other_q = 0.0;
                    for i in 0..d {
                        let row = &b_rows[i * d..(i + 1) * d];
                        let u = c[i] + row.iter().zip(&xi).map(|(a, x)| a * x).sum::<f64>();
                        other_q += u * u;
                    }
                    0.5 * (other_q - self_q) + log_det_half
                };
                for (k, &e) in eps.iter().enumerate() {
                    if loss > e {
                        let t = -(e - loss).exp_m1();
                        acc[k].0 += t;
                        acc[k].1 += t * t;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![(0.0, 0.0); eps.len()];
    for shard in &per_shard {
        for (t, s) in total.iter_mut().zip(shard) {
            t.0 += s.0;
            t.1 += s.1;
        }
    }
    total
}
