//! Exact ridge / linear regression with a cached Cholesky factor of
//! `H = XᵀX + λI`, leverage scores and Sherman–Morrison rank-one updates.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::data::{DataPoint, Dataset, Direction};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Relative pivot floor: a Cholesky pivot below `PIVOT_FLOOR · tr(H)/d`
/// is treated as a loss of positive definiteness.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Fitted ridge regression `θ̂ = H⁻¹g` with `H = XᵀX + λI`, `g = Xᵀy`.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    theta_hat: Vector,
    h: Matrix,
    g: Vector,
    lambda: f64,
    n: usize,
    chol: Cholesky<f64, Dyn>,
}

/// Out-of-sample leverage `μ = xᵀH⁻¹x` and in-sample leverage
/// `μ′ = xᵀ(H + xxᵀ)⁻¹x = μ/(1 + μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeveragePair {
    pub mu: f64,
    pub mu_prime: f64,
}

impl LeveragePair {
    pub fn from_mu(mu: f64) -> Self {
        Self { mu, mu_prime: mu / (1.0 + mu) }
    }

    /// Recovers the pair from an in-sample leverage `μ′ < 1`.
    pub fn from_mu_prime(mu_prime: f64) -> Self {
        Self { mu: mu_prime / (1.0 - mu_prime), mu_prime }
    }
}

/// Cholesky factorization with the pivot guard applied.
pub(crate) fn guarded_cholesky(m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    let d = m.nrows();
    let singular = || Error::Singular { min_eigenvalue: min_symmetric_eigenvalue(m) };
    let chol = Cholesky::new(m.clone()).ok_or_else(singular)?;
    check_pivots(&chol, m.trace(), d).map_err(|_| singular())?;
    Ok(chol)
}

fn check_pivots(chol: &Cholesky<f64, Dyn>, trace: f64, d: usize) -> std::result::Result<(), ()> {
    if d == 0 {
        return Ok(());
    }
    let floor = PIVOT_FLOOR * trace / d as f64;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot.is_finite() && min_pivot > floor && floor > 0.0) {
        return Err(());
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix by full eigendecomposition.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix by full eigendecomposition.
pub fn max_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

impl RidgeSolution {
    /// Builds the solution from accumulated sufficient statistics.
    pub fn from_statistics(gram: Matrix, g: Vector, lambda: f64, n: usize) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("ridge penalty must be finite and nonnegative, got {lambda}")));
        }
        let d = gram.nrows();
        if g.len() != d {
            return Err(Error::Dimension { expected: d, found: g.len() });
        }
        let mut h = gram;
        for i in 0..d {
            h[(i, i)] += lambda;
        }
        let h = symmetrize(h);
        let chol = guarded_cholesky(&h)?;
        let theta_hat = chol.solve(&g);
        Ok(Self { theta_hat, h, g, lambda, n, chol })
    }

    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }

    /// `H = XᵀX + λI`.
    pub fn h(&self) -> &Matrix {
        &self.h
    }

    /// `g = Xᵀy`.
    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `XᵀX = H − λI`.
    pub fn gram(&self) -> Matrix {
        let mut m = self.h.clone();
        for i in 0..self.d() {
            m[(i, i)] -= self.lambda;
        }
        m
    }

    /// `H⁻¹v`.
    pub fn solve(&self, v: &Vector) -> Vector {
        self.chol.solve(v)
    }

    /// `H⁻¹`, used for quadratic forms that need the explicit inverse.
    pub fn h_inverse(&self) -> Matrix {
        symmetrize(self.chol.inverse())
    }

    pub fn ln_det(&self) -> f64 {
        self.chol.ln_determinant()
    }

    /// Relative residual `‖Hθ̂ − g‖ / max(‖g‖, 1)` of the normal equations.
    pub fn normal_equation_residual(&self) -> f64 {
        (&self.h * &self.theta_hat - &self.g).norm() / self.g.norm().max(1.0)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.d() {
            return Err(Error::Dimension { expected: self.d(), found });
        }
        Ok(())
    }

    /// Leverage pair of `x` against `H`.
    pub fn leverage(&self, x: &Vector) -> Result<LeveragePair> {
        self.check_dim(x.len())?;
        let mu = x.dot(&self.solve(x)).max(0.0);
        Ok(LeveragePair::from_mu(mu))
    }

    /// `y − xᵀθ̂`.
    pub fn residual(&self, z: &DataPoint) -> Result<f64> {
        self.check_dim(z.dim())?;
        Ok(z.y - z.x.dot(&self.theta_hat))
    }

    /// The solution on the adjacent data set, via Sherman–Morrison for `θ̂`
    /// and a Cholesky up/downdate for the factor.
    pub fn rank_one_update(&self, z: &DataPoint, direction: Direction) -> Result<RidgeSolution> {
        self.check_dim(z.dim())?;
        let x = &z.x;
        let hinv_x = self.solve(x);
        let mu = x.dot(&hinv_x);
        let r = z.y - x.dot(&self.theta_hat);
        let (sign, n, denom) = match direction {
            Direction::Add => (1.0, self.n + 1, 1.0 + mu),
            Direction::Remove => {
                if self.n == 0 {
                    return Err(Error::NotFound);
                }
                (-1.0, self.n - 1, 1.0 - mu)
            }
        };
        let mut h = self.h.clone();
        h.ger(sign, x, x, 1.0);
        let h = symmetrize(h);
        let singular = || Error::Singular { min_eigenvalue: min_symmetric_eigenvalue(&h) };
        if !(denom > 0.0) {
            return Err(singular());
        }
        let mut chol = self.chol.clone();
        chol.rank_one_update(x, sign);
        check_pivots(&chol, h.trace(), self.d()).map_err(|_| singular())?;
        let mut g = self.g.clone();
        g.axpy(sign * z.y, x, 1.0);
        let theta_hat = &self.theta_hat + &hinv_x * (sign * r / denom);
        Ok(RidgeSolution { theta_hat, h, g, lambda: self.lambda, n, chol })
    }
}

pub(crate) fn symmetrize(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

/// Solves ridge regression on `ds` with penalty `λ ≥ 0`.
pub fn fit_ridge(ds: &Dataset, lambda: f64) -> Result<RidgeSolution> {
    RidgeSolution::from_statistics(ds.gram(), ds.moment(), lambda, ds.n())
}

pub fn leverage(sol: &RidgeSolution, x: &Vector) -> Result<LeveragePair> {
    sol.leverage(x)
}

pub fn rank_one_update(sol: &RidgeSolution, z: &DataPoint, direction: Direction) -> Result<RidgeSolution> {
    sol.rank_one_update(z, direction)
}

pub fn residual(sol: &RidgeSolution, z: &DataPoint) -> Result<f64> {
    sol.residual(z)
}

/// `λ_min(XᵀX)`; zero for an empty data set.
pub fn min_eigenvalue(ds: &Dataset) -> f64 {
    min_symmetric_eigenvalue(&ds.gram()).max(0.0)
}
