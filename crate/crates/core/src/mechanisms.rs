//! Randomized releases: Gaussian output perturbation with a choice of
//! noise shape, one-posterior sampling (OPS), objective perturbation and
//! AdaOPS (OPS with a privately chosen regularizer).
//!
//! Every mechanism is a pure function of its inputs and a `u64` seed.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ridge::{fit_ridge, guarded_cholesky, min_eigenvalue, min_symmetric_eigenvalue, RidgeSolution};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::{Matrix, Vector};

/// Shape `A` of the Gaussian noise `N(0, A⁻¹/γ)`, realized against the
/// ridge system `H = XᵀX + λI` of the data being released.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDesign {
    /// `A = λ_min(H)·I`.
    Isotropic,
    /// `A = H²`.
    Democratic,
    /// `A = H`.
    Fisher,
    /// A fixed, data-independent SPD matrix.
    Explicit(Matrix),
}

impl NoiseDesign {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseDesign::Isotropic => "isotropic",
            NoiseDesign::Democratic => "democratic",
            NoiseDesign::Fisher => "fisher",
            NoiseDesign::Explicit(_) => "explicit",
        }
    }

    /// The concrete matrix `A` for this solution.
    pub fn realize(&self, sol: &RidgeSolution) -> Result<Matrix> {
        let d = sol.d();
        let a = match self {
            NoiseDesign::Isotropic => Matrix::identity(d, d) * min_symmetric_eigenvalue(sol.h()),
            NoiseDesign::Democratic => crate::ridge::symmetrize(sol.h() * sol.h()),
            NoiseDesign::Fisher => sol.h().clone(),
            NoiseDesign::Explicit(a) => {
                if a.nrows() != d || a.ncols() != d {
                    return Err(Error::Dimension { expected: d, found: a.nrows() });
                }
                a.clone()
            }
        };
        // Surface non-SPD designs here rather than at sampling time.
        guarded_cholesky(&a)?;
        Ok(a)
    }
}

/// Draws `mean + L⁻ᵀξ/√γ` for a precision matrix `P = LLᵀ`, i.e. samples
/// `N(mean, P⁻¹/γ)`.
#[derive(Debug, Clone)]
pub struct PrecisionSampler {
    mean: Vector,
    l_transpose: Matrix,
    scale: f64,
}

impl PrecisionSampler {
    pub fn new(mean: Vector, precision: &Cholesky<f64, Dyn>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("gamma must be positive and finite, got {gamma}")));
        }
        if mean.len() != precision.l_dirty().nrows() {
            return Err(Error::Dimension { expected: precision.l_dirty().nrows(), found: mean.len() });
        }
        Ok(Self { mean, l_transpose: precision.l().transpose(), scale: gamma.sqrt().recip() })
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vector {
        let xi = Vector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = self
            .l_transpose
            .solve_upper_triangular(&xi)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + v * self.scale
    }
}

/// Parameters of a mechanism, echoed in every sample.
#[derive(Debug, Clone, PartialEq)]
pub enum MechanismSpec {
    /// Ridge fit with penalty `lambda`, then `N(θ̂, A⁻¹/γ)`.
    Gaussian { design: NoiseDesign, gamma: f64, lambda: f64 },
    /// One draw from `N(θ̂, (γH)⁻¹)`.
    Ops { lambda: f64, gamma: f64 },
    /// `H⁻¹(Xᵀy − b/2)`, `b ∼ N(0, σ²I)`.
    ObjPert { sigma: f64, lambda: f64 },
    /// OPS with `λ_n`, `γ_n` set from a private release of `λ_min(XᵀX)`.
    AdaOps { eps: f64, delta: f64, kappa: f64 },
}

impl MechanismSpec {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismSpec::Gaussian { design: NoiseDesign::Democratic, .. } => MechanismKind::GaussDemocratic,
            MechanismSpec::Gaussian { design: NoiseDesign::Fisher, .. } => MechanismKind::GaussFisher,
            MechanismSpec::Gaussian { design: NoiseDesign::Explicit(_), .. } => MechanismKind::GaussExplicit,
            MechanismSpec::Gaussian { .. } => MechanismKind::GaussIso,
            MechanismSpec::Ops { .. } => MechanismKind::Ops,
            MechanismSpec::ObjPert { .. } => MechanismKind::ObjPert,
            MechanismSpec::AdaOps { .. } => MechanismKind::AdaOps,
        }
    }

    /// Runs the mechanism on `ds`.
    pub fn release(&self, ds: &Dataset, seed: u64) -> Result<MechanismSample> {
        match self {
            MechanismSpec::Gaussian { design, gamma, lambda } => {
                let sol = fit_ridge(ds, *lambda)?;
                let mut s = output_perturb(&sol, design, *gamma, seed)?;
                s.spec = self.clone();
                Ok(s)
            }
            MechanismSpec::Ops { lambda, gamma } => ops_sample(ds, *lambda, *gamma, seed),
            MechanismSpec::ObjPert { sigma, lambda } => objpert_sample(ds, *sigma, *lambda, seed),
            MechanismSpec::AdaOps { eps, delta, kappa } => adaops(ds, *eps, *delta, *kappa, seed),
        }
    }
}

/// Command-line names of the mechanism families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    GaussIso,
    GaussDemocratic,
    GaussFisher,
    GaussExplicit,
    Ops,
    ObjPert,
    AdaOps,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 7] = [
        MechanismKind::GaussIso,
        MechanismKind::GaussDemocratic,
        MechanismKind::GaussFisher,
        MechanismKind::GaussExplicit,
        MechanismKind::Ops,
        MechanismKind::ObjPert,
        MechanismKind::AdaOps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::GaussIso => "gauss-iso",
            MechanismKind::GaussDemocratic => "gauss-democratic",
            MechanismKind::GaussFisher => "gauss-fisher",
            MechanismKind::GaussExplicit => "gauss-explicit",
            MechanismKind::Ops => "ops",
            MechanismKind::ObjPert => "objpert",
            MechanismKind::AdaOps => "adaops",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown mechanism `{s}`")))
    }
}

/// Quantities chosen privately by AdaOPS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaOpsDiagnostics {
    /// Noisy minimum eigenvalue `λ̃_min`.
    pub lambda_min_noisy: f64,
    pub lambda_n: f64,
    pub gamma_n: f64,
}

/// One released parameter vector with the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSample {
    pub theta_tilde: Vector,
    pub spec: MechanismSpec,
    pub seed: u64,
    /// Present iff the mechanism is AdaOPS.
    pub diagnostics: Option<AdaOpsDiagnostics>,
}

/// Gaussian output perturbation `θ̂ + N(0, A⁻¹/γ)`.
pub fn output_perturb(sol: &RidgeSolution, design: &NoiseDesign, gamma: f64, seed: u64) -> Result<MechanismSample> {
    let a = design.realize(sol)?;
    let chol = guarded_cholesky(&a)?;
    let sampler = PrecisionSampler::new(sol.theta_hat().clone(), &chol, gamma)?;
    let theta_tilde = sampler.sample(&mut rng_from_seed(seed));
    Ok(MechanismSample {
        theta_tilde,
        spec: MechanismSpec::Gaussian { design: design.clone(), gamma, lambda: sol.lambda() },
        seed,
        diagnostics: None,
    })
}

/// Sampler for the OPS posterior `N(θ̂, (γH)⁻¹)` of a fitted solution.
pub fn ops_sampler(sol: &RidgeSolution, gamma: f64) -> Result<PrecisionSampler> {
    PrecisionSampler::new(sol.theta_hat().clone(), sol.cholesky(), gamma)
}

/// One posterior sample with density `∝ exp(−γ/2 (‖y − Xθ‖² + λ‖θ‖²))`.
pub fn ops_sample(ds: &Dataset, lambda: f64, gamma: f64, seed: u64) -> Result<MechanismSample> {
    let sol = fit_ridge(ds, lambda)?;
    ops_sample_from(&sol, gamma, seed)
}

/// [`ops_sample`] on an already-fitted solution.
pub fn ops_sample_from(sol: &RidgeSolution, gamma: f64, seed: u64) -> Result<MechanismSample> {
    let theta_tilde = ops_sampler(sol, gamma)?.sample(&mut rng_from_seed(seed));
    Ok(MechanismSample {
        theta_tilde,
        spec: MechanismSpec::Ops { lambda: sol.lambda(), gamma },
        seed,
        diagnostics: None,
    })
}

/// Objective perturbation: `argmin ‖y − Xθ‖² + λ‖θ‖² + ⟨b, θ⟩` with
/// `b ∼ N(0, σ²I)`, i.e. `H⁻¹(Xᵀy − b/2)`.
pub fn objpert_sample(ds: &Dataset, sigma: f64, lambda: f64, seed: u64) -> Result<MechanismSample> {
    let sol = fit_ridge(ds, lambda)?;
    objpert_sample_from(&sol, sigma, seed)
}

pub fn objpert_sample_from(sol: &RidgeSolution, sigma: f64, seed: u64) -> Result<MechanismSample> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let b = Vector::from_fn(sol.d(), |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let theta_tilde = sol.solve(&(sol.g() - b * 0.5));
    Ok(MechanismSample {
        theta_tilde,
        spec: MechanismSpec::ObjPert { sigma, lambda: sol.lambda() },
        seed,
        diagnostics: None,
    })
}

/// Data-independent AdaOPS constants for a given `(n, d, ε, δ, κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaOpsParams {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    /// `log(4/δ)`.
    pub log_term: f64,
    /// `√log(4/δ) / (ε/2)`, the noise scale of the eigenvalue release.
    pub eigen_noise_scale: f64,
    pub gamma_n: f64,
}

impl AdaOpsParams {
    /// Largest admissible `κ = nε / (4d(1 + log(4/δ)))`.
    pub fn kappa_bound(n: usize, d: usize, eps: f64, delta: f64) -> f64 {
        n as f64 * eps / (4.0 * d as f64 * (1.0 + (4.0 / delta).ln()))
    }

    pub fn new(n: usize, d: usize, eps: f64, delta: f64, kappa: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param(format!("eps must be positive, got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
        }
        if n == 0 || d == 0 {
            return Err(Error::param("AdaOPS needs a nonempty data set with d ≥ 1"));
        }
        let bound = Self::kappa_bound(n, d, eps, delta);
        if !(kappa > 0.0 && kappa <= bound) {
            return Err(Error::param(format!(
                "kappa must satisfy 0 < kappa <= n*eps/(4d(1+log(4/delta))) = {bound}, got {kappa}"
            )));
        }
        let log_term = (4.0 / delta).ln();
        let (nf, df) = (n as f64, d as f64);
        let k2d2 = kappa * kappa * df * df;
        let gamma_n = (nf * eps * eps / (16.0 * k2d2 * log_term)).min(nf * eps / (8.0 * k2d2));
        Ok(Self { n, d, eps, delta, kappa, log_term, eigen_noise_scale: log_term.sqrt() / (eps / 2.0), gamma_n })
    }

    /// `λ_n = max{0, n/(dκ) − λ̃_min + log(4/δ)/(ε/2)}`.
    pub fn lambda_n(&self, lambda_min_noisy: f64) -> f64 {
        let target = self.n as f64 / (self.d as f64 * self.kappa) + self.log_term / (self.eps / 2.0);
        (target - lambda_min_noisy).max(0.0)
    }
}

/// AdaOPS: privately release `λ_min(XᵀX)`, pick `λ_n` and `γ_n`, then draw
/// one OPS sample. Sub-seed 0 drives the eigenvalue noise, sub-seed 1 the
/// posterior draw.
pub fn adaops(ds: &Dataset, eps: f64, delta: f64, kappa: f64, seed: u64) -> Result<MechanismSample> {
    let params = AdaOpsParams::new(ds.n(), ds.d(), eps, delta, kappa)?;
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let xi: f64 = rng.sample(StandardNormal);
    let noisy = min_eigenvalue(ds) + params.eigen_noise_scale * xi;
    adaops_given_eigenvalue(ds, &params, noisy, seed)
}

/// Second stage of [`adaops`] with the noisy eigenvalue supplied.
pub fn adaops_given_eigenvalue(
    ds: &Dataset,
    params: &AdaOpsParams,
    lambda_min_noisy: f64,
    seed: u64,
) -> Result<MechanismSample> {
    let lambda_n = params.lambda_n(lambda_min_noisy);
    let sol = fit_ridge(ds, lambda_n)?;
    let mut s = ops_sample_from(&sol, params.gamma_n, derive_seed(seed, 1))?;
    s.spec = MechanismSpec::AdaOps { eps: params.eps, delta: params.delta, kappa: params.kappa };
    s.seed = seed;
    s.diagnostics = Some(AdaOpsDiagnostics { lambda_min_noisy, lambda_n, gamma_n: params.gamma_n });
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_linear_gaussian, SyntheticConfig};
    use crate::stats::{mean_and_covariance, relative_frobenius};

    fn toy() -> Dataset {
        generate_linear_gaussian(&SyntheticConfig::with_unit_theta(60, 3, 0.2, 4)).unwrap().0
    }

    fn draws(n: u64, mut f: impl FnMut(u64) -> Vector) -> Vec<Vector> {
        (0..n).map(|i| f(derive_seed(99, i))).collect()
    }

    #[test]
    fn huge_gamma_collapses_to_point_estimate() {
        let sol = fit_ridge(&toy(), 1.0).unwrap();
        for seed in 0..1000 {
            let s = output_perturb(&sol, &NoiseDesign::Explicit(Matrix::identity(3, 3)), 1e12, seed).unwrap();
            assert!((&s.theta_tilde - sol.theta_hat()).norm() < 1e-4);
        }
    }

    #[test]
    fn identity_design_has_identity_covariance() {
        let sol = fit_ridge(&toy(), 1.0).unwrap();
        let a = NoiseDesign::Explicit(Matrix::identity(3, 3));
        let xs = draws(100_000, |s| output_perturb(&sol, &a, 1.0, s).unwrap().theta_tilde);
        let (_, cov) = mean_and_covariance(&xs);
        assert!(relative_frobenius(&cov, &Matrix::identity(3, 3)) < 0.05);
    }

    #[test]
    fn figure_one_mechanism_moments() {
        // N((XᵀX + I)⁻¹Xᵀy, σ²I) with σ = 4 is A = I, γ = 1/16.
        let ds = toy();
        let sol = fit_ridge(&ds, 1.0).unwrap();
        let a = NoiseDesign::Explicit(Matrix::identity(3, 3));
        let xs = draws(100_000, |s| output_perturb(&sol, &a, 1.0 / 16.0, s).unwrap().theta_tilde);
        let (mean, cov) = mean_and_covariance(&xs);
        let se = 4.0 / (xs.len() as f64).sqrt();
        assert!((mean - sol.theta_hat()).amax() < 4.0 * se);
        assert!(relative_frobenius(&cov, &(Matrix::identity(3, 3) * 16.0)) < 0.05);
    }

    #[test]
    fn non_spd_design_is_rejected() {
        let sol = fit_ridge(&toy(), 1.0).unwrap();
        let bad = NoiseDesign::Explicit(Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0, 1.0])));
        assert!(matches!(output_perturb(&sol, &bad, 1.0, 0), Err(Error::Singular { .. })));
        let wrong = NoiseDesign::Explicit(Matrix::identity(2, 2));
        assert!(matches!(output_perturb(&sol, &wrong, 1.0, 0), Err(Error::Dimension { .. })));
        assert!(output_perturb(&sol, &NoiseDesign::Fisher, 0.0, 0).is_err());
    }

    #[test]
    fn ops_moments_and_gamma_scaling() {
        let ds = toy();
        let (lambda, gamma) = (0.5, 2.0);
        let sol = fit_ridge(&ds, lambda).unwrap();
        let xs = draws(100_000, |s| ops_sample(&ds, lambda, gamma, s).unwrap().theta_tilde);
        let (mean, cov) = mean_and_covariance(&xs);
        let target = sol.h_inverse() / gamma;
        for j in 0..3 {
            let se = (target[(j, j)] / xs.len() as f64).sqrt();
            assert!((mean[j] - sol.theta_hat()[j]).abs() < 4.0 * se);
        }
        assert!(relative_frobenius(&cov, &target) < 0.05);
        let ys = draws(100_000, |s| ops_sample(&ds, lambda, 2.0 * gamma, s).unwrap().theta_tilde);
        let (_, cov2) = mean_and_covariance(&ys);
        let ratio = cov2.trace() / cov.trace();
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn ops_is_fisher_output_perturbation() {
        let ds = toy();
        let sol = fit_ridge(&ds, 0.7).unwrap();
        for seed in 0..50 {
            let a = ops_sample(&ds, 0.7, 3.0, seed).unwrap().theta_tilde;
            let b = output_perturb(&sol, &NoiseDesign::Fisher, 3.0, seed).unwrap().theta_tilde;
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn objpert_zero_noise_and_identity() {
        let ds = toy();
        let sol = fit_ridge(&ds, 0.4).unwrap();
        assert_eq!(&objpert_sample(&ds, 0.0, 0.4, 3).unwrap().theta_tilde, sol.theta_hat());

        let sigma = 5.0;
        let xs = draws(100_000, |s| objpert_sample(&ds, sigma, 0.4, s).unwrap().theta_tilde);
        let ys = draws(100_000, |s| {
            output_perturb(&sol, &NoiseDesign::Democratic, 4.0 / (sigma * sigma), derive_seed(s, 7))
                .unwrap()
                .theta_tilde
        });
        let (m1, c1) = mean_and_covariance(&xs);
        let (m2, c2) = mean_and_covariance(&ys);
        let target = sol.h_inverse() * sol.h_inverse() * (sigma * sigma / 4.0);
        for j in 0..3 {
            let se = (target[(j, j)] / xs.len() as f64).sqrt();
            assert!((m1[j] - sol.theta_hat()[j]).abs() < 4.0 * se);
            assert!((m1[j] - m2[j]).abs() < 4.0 * se * 2f64.sqrt());
        }
        assert!(relative_frobenius(&c1, &target) < 0.05);
        assert!(relative_frobenius(&c1, &c2) < 0.05);
    }

    #[test]
    fn adaops_parameter_arithmetic() {
        let p = AdaOpsParams::new(1000, 2, 1.0, 0.01, 10.0).unwrap();
        assert!((AdaOpsParams::kappa_bound(1000, 2, 1.0, 0.01) - 17.878_943_554_352_46).abs() < 1e-10);
        assert!((p.gamma_n - 0.026_078_765_679_322_977).abs() < 1e-15);
        let err = AdaOpsParams::new(1000, 2, 1.0, 0.01, 18.0).unwrap_err();
        assert!(err.to_string().contains("17.87"), "{err}");
        assert!(AdaOpsParams::new(1000, 2, 1.0, 1.5, 1.0).is_err());
        assert!(AdaOpsParams::new(1000, 2, 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn adaops_branch_and_determinism() {
        let ds = generate_linear_gaussian(&SyntheticConfig::with_unit_theta(1000, 2, 0.1, 3)).unwrap().0;
        let a = adaops(&ds, 1.0, 0.01, 10.0, 5).unwrap();
        let b = adaops(&ds, 1.0, 0.01, 10.0, 5).unwrap();
        assert_eq!(a, b);
        let diag = a.diagnostics.unwrap();
        assert_eq!(diag.lambda_n, 0.0);

        let p = AdaOpsParams::new(1000, 2, 1.0, 0.01, 10.0).unwrap();
        let forced = adaops_given_eigenvalue(&ds, &p, 1e9, 5).unwrap();
        let plain = ops_sample(&ds, 0.0, p.gamma_n, derive_seed(5, 1)).unwrap();
        assert_eq!(forced.theta_tilde, plain.theta_tilde);
        assert_eq!(a.theta_tilde, plain.theta_tilde);

        let tiny = adaops_given_eigenvalue(&ds, &p, 0.0, 5).unwrap().diagnostics.unwrap();
        assert!((tiny.lambda_n - (50.0 + 400f64.ln() / 0.5)).abs() < 1e-12);
        assert!(ops_sample(&ds, 0.0, 1.0, 0).unwrap().diagnostics.is_none());
    }

    #[test]
    fn mechanism_names_round_trip() {
        for k in MechanismKind::ALL {
            assert_eq!(k.as_str().parse::<MechanismKind>().unwrap(), k);
        }
        assert!("laplace".parse::<MechanismKind>().is_err());
    }
}
