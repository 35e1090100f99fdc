//! Per-instance sensitivity for smooth regularized ERM
//! `θ̂ = argmin Σᵢ ℓ(θ, zᵢ) + r(θ)`.
//!
//! Two routes: the difference of two independent Newton solves, and the
//! integrated-Hessian identity
//! `θ̂ − θ̂′ = [∫₀¹ ∇²F′(η_t) dt]⁻¹ ∇ℓ(θ̂, z)` with `η_t = tθ̂ + (1 − t)θ̂′`,
//! evaluated by Gauss–Legendre quadrature.

use crate::data::{DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::ridge::{guarded_cholesky, symmetrize};
use crate::rng::rng_from_seed;
use crate::{Matrix, Vector};
use rand::Rng;

use super::sensitivity::a_norm;

/// A twice-differentiable per-example loss.
pub trait PointLoss: Send + Sync {
    fn value(&self, theta: &Vector, z: &DataPoint) -> f64;
    fn gradient(&self, theta: &Vector, z: &DataPoint) -> Vector;
    fn hessian(&self, theta: &Vector, z: &DataPoint) -> Matrix;
}

/// A twice-differentiable regularizer.
pub trait Regularizer: Send + Sync {
    fn value(&self, theta: &Vector) -> f64;
    fn gradient(&self, theta: &Vector) -> Vector;
    fn hessian(&self, theta: &Vector) -> Matrix;
}

/// `½(y − xᵀθ)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl PointLoss for SquaredLoss {
    fn value(&self, theta: &Vector, z: &DataPoint) -> f64 {
        0.5 * (z.y - z.x.dot(theta)).powi(2)
    }

    fn gradient(&self, theta: &Vector, z: &DataPoint) -> Vector {
        &z.x * (z.x.dot(theta) - z.y)
    }

    fn hessian(&self, _theta: &Vector, z: &DataPoint) -> Matrix {
        &z.x * z.x.transpose()
    }
}

/// `log(1 + exp(−y·xᵀθ))` for labels `y ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticLoss;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl PointLoss for LogisticLoss {
    fn value(&self, theta: &Vector, z: &DataPoint) -> f64 {
        let m = -z.y * z.x.dot(theta);
        // log(1 + e^m) without overflow.
        m.max(0.0) + (-m.abs()).exp().ln_1p()
    }

    fn gradient(&self, theta: &Vector, z: &DataPoint) -> Vector {
        let m = z.y * z.x.dot(theta);
        &z.x * (-z.y * sigmoid(-m))
    }

    fn hessian(&self, theta: &Vector, z: &DataPoint) -> Matrix {
        let s = sigmoid(z.x.dot(theta));
        &z.x * z.x.transpose() * (s * (1.0 - s))
    }
}

/// `½λ‖θ‖²`.
#[derive(Debug, Clone, Copy)]
pub struct L2Regularizer {
    pub lambda: f64,
}

impl Regularizer for L2Regularizer {
    fn value(&self, theta: &Vector) -> f64 {
        0.5 * self.lambda * theta.norm_squared()
    }

    fn gradient(&self, theta: &Vector) -> Vector {
        theta * self.lambda
    }

    fn hessian(&self, theta: &Vector) -> Matrix {
        Matrix::identity(theta.len(), theta.len()) * self.lambda
    }
}

/// Loss, regularizer and Newton solver settings.
pub struct SmoothProblem {
    loss: Box<dyn PointLoss>,
    reg: Box<dyn Regularizer>,
    /// Stop when `‖∇F‖ ≤ tol·max(1, n)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl std::fmt::Debug for SmoothProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothProblem").field("tol", &self.tol).field("max_iter", &self.max_iter).finish()
    }
}

const FD_TOL: f64 = 1e-5;

fn relative_gap(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-8)
}

impl SmoothProblem {
    /// Registers the problem after checking the analytic gradients and
    /// Hessians against central finite differences at a few probe points
    /// (relative tolerance `1e-5`).
    pub fn new(loss: Box<dyn PointLoss>, reg: Box<dyn Regularizer>, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::param(format!("solver tolerance must be positive, got {tol}")));
        }
        let problem = Self { loss, reg, tol, max_iter: 100 };
        problem.check_derivatives()?;
        Ok(problem)
    }

    pub fn squared(lambda: f64) -> Result<Self> {
        Self::new(Box::new(SquaredLoss), Box::new(L2Regularizer { lambda }), 1e-12)
    }

    pub fn logistic(lambda: f64) -> Result<Self> {
        Self::new(Box::new(LogisticLoss), Box::new(L2Regularizer { lambda }), 1e-12)
    }

    fn check_derivatives(&self) -> Result<()> {
        let mut rng = rng_from_seed(0x5eed);
        for d in [1usize, 3] {
            for _ in 0..3 {
                let theta = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let x = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let z = DataPoint::new(x, if rng.random_bool(0.5) { 1.0 } else { -1.0 });
                let fd = |f: &dyn Fn(&Vector) -> f64| {
                    Vector::from_fn(d, |j, _| {
                        let h = 1e-5 * theta[j].abs().max(1.0);
                        let mut up = theta.clone();
                        let mut dn = theta.clone();
                        up[j] += h;
                        dn[j] -= h;
                        (f(&up) - f(&dn)) / (2.0 * h)
                    })
                };
                let fd_jac = |g: &dyn Fn(&Vector) -> Vector| {
                    let mut m = Matrix::zeros(d, d);
                    for j in 0..d {
                        let h = 1e-5 * theta[j].abs().max(1.0);
                        let mut up = theta.clone();
                        let mut dn = theta.clone();
                        up[j] += h;
                        dn[j] -= h;
                        m.set_column(j, &((g(&up) - g(&dn)) / (2.0 * h)));
                    }
                    m
                };
                let as_mat = |v: Vector| Matrix::from_column_slice(d, 1, v.as_slice());
                let checks = [
                    ("loss gradient", relative_gap(
                        &as_mat(self.loss.gradient(&theta, &z)),
                        &as_mat(fd(&|t| self.loss.value(t, &z))),
                    )),
                    ("loss Hessian", relative_gap(
                        &self.loss.hessian(&theta, &z),
                        &fd_jac(&|t| self.loss.gradient(t, &z)),
                    )),
                    ("regularizer gradient", relative_gap(
                        &as_mat(self.reg.gradient(&theta)),
                        &as_mat(fd(&|t| self.reg.value(t))),
                    )),
                    ("regularizer Hessian", relative_gap(&self.reg.hessian(&theta), &fd_jac(&|t| self.reg.gradient(t)))),
                ];
                for (what, gap) in checks {
                    if !(gap <= FD_TOL) {
                        return Err(Error::param(format!(
                            "{what} disagrees with finite differences (relative error {gap:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn objective(&self, ds: &Dataset, extra: Option<&DataPoint>, theta: &Vector) -> f64 {
        ds.iter().chain(extra).map(|z| self.loss.value(theta, z)).sum::<f64>() + self.reg.value(theta)
    }

    pub fn gradient(&self, ds: &Dataset, extra: Option<&DataPoint>, theta: &Vector) -> Vector {
        let mut g = self.reg.gradient(theta);
        for z in ds.iter().chain(extra) {
            g += self.loss.gradient(theta, z);
        }
        g
    }

    pub fn hessian(&self, ds: &Dataset, extra: Option<&DataPoint>, theta: &Vector) -> Matrix {
        let mut h = self.reg.hessian(theta);
        for z in ds.iter().chain(extra) {
            h += self.loss.hessian(theta, z);
        }
        symmetrize(h)
    }

    pub fn loss_gradient(&self, theta: &Vector, z: &DataPoint) -> Vector {
        self.loss.gradient(theta, z)
    }

    /// Damped Newton with backtracking from `θ = 0` on `Z` (plus `extra`).
    pub fn solve(&self, ds: &Dataset, extra: Option<&DataPoint>) -> Result<Vector> {
        let d = ds.d();
        let scale = (ds.n() + usize::from(extra.is_some())).max(1) as f64;
        let mut theta = Vector::zeros(d);
        let mut f = self.objective(ds, extra, &theta);
        let mut gnorm = f64::INFINITY;
        for _ in 0..self.max_iter {
            let g = self.gradient(ds, extra, &theta);
            gnorm = g.norm();
            if gnorm <= self.tol * scale {
                return Ok(theta);
            }
            let h = self.hessian(ds, extra, &theta);
            let step = guarded_cholesky(&h)?.solve(&g);
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let cand = &theta - &step * t;
                let fc = self.objective(ds, extra, &cand);
                if fc <= f - 1e-4 * t * slope || t < 1e-10 {
                    // Near the optimum f stalls in floating point; accept the
                    // full step and let the gradient test decide.
                    theta = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
        }
        Err(Error::NonConvergence { iterations: self.max_iter, gradient_norm: gnorm })
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n <= 1 { 1.0 } else { p0 };
            dp = if n == 1 { 1.0 } else { nf * (x * pn - pn1) / (x * x - 1.0) };
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `‖θ̂(Z) − θ̂([Z, z])‖_A` from two independent solves.
pub fn sensitivity_smooth_exact(problem: &SmoothProblem, ds: &Dataset, z: &DataPoint, a: &Matrix) -> Result<f64> {
    let theta = problem.solve(ds, None)?;
    let theta_prime = problem.solve(ds, Some(z))?;
    Ok(a_norm(&(theta - theta_prime), a))
}

/// The integrated-Hessian form of the same sensitivity with
/// `quadrature_nodes` Gauss–Legendre nodes along the segment between the
/// two stationary points.
pub fn sensitivity_smooth_quasinewton(
    problem: &SmoothProblem,
    ds: &Dataset,
    z: &DataPoint,
    quadrature_nodes: usize,
    a: &Matrix,
) -> Result<f64> {
    if quadrature_nodes == 0 {
        return Err(Error::param("at least one quadrature node is required"));
    }
    let theta = problem.solve(ds, None)?;
    let score = problem.loss_gradient(&theta, z);
    if score.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let theta_prime = problem.solve(ds, Some(z))?;
    let (nodes, weights) = gauss_legendre(quadrature_nodes);
    let d = ds.d();
    let mut m = Matrix::zeros(d, d);
    for (&t, &w) in nodes.iter().zip(&weights) {
        let eta = &theta * t + &theta_prime * (1.0 - t);
        m += problem.hessian(ds, Some(z), &eta) * w;
    }
    let v = guarded_cholesky(&symmetrize(m))?.solve(&score);
    Ok(a_norm(&v, a))
}
