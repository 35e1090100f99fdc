//! Per-instance sensitivity of the ridge estimator.

use crate::data::DataPoint;
use crate::error::{Error, Result};
use crate::ridge::RidgeSolution;
use crate::{Matrix, Vector};

/// `‖v‖_A = √(vᵀAv)`.
pub fn a_norm(v: &Vector, a: &Matrix) -> f64 {
    v.dot(&(a * v)).max(0.0).sqrt()
}

fn check_design(sol: &RidgeSolution, a: &Matrix) -> Result<()> {
    if a.nrows() != sol.d() || a.ncols() != sol.d() {
        return Err(Error::Dimension { expected: sol.d(), found: a.nrows() });
    }
    Ok(())
}

/// `Δ_A(Z, z) = ‖θ̂([Z, z]) − θ̂(Z)‖_A` for `sol` fitted on `Z` (without
/// `z`). Evaluated as `|y − xᵀθ̂|·‖H′⁻¹x‖_A` with `H′⁻¹x = H⁻¹x/(1 + μ)`.
pub fn sensitivity_linreg(sol: &RidgeSolution, z: &DataPoint, a: &Matrix) -> Result<f64> {
    check_design(sol, a)?;
    let r = sol.residual(z)?;
    let hinv_x = sol.solve(&z.x);
    let mu = z.x.dot(&hinv_x).max(0.0);
    Ok(r.abs() / (1.0 + mu) * a_norm(&hinv_x, a))
}

/// The same sensitivity from the fit on `[Z, z]` (which contains `z`):
/// `‖H⁻¹x‖_A·|y − xᵀθ̂|/(1 − μ′)` with the in-sample leverage `μ′`.
pub fn sensitivity_linreg_in_sample(sol_with: &RidgeSolution, z: &DataPoint, a: &Matrix) -> Result<f64> {
    check_design(sol_with, a)?;
    let r_in = sol_with.residual(z)?;
    let hinv_x = sol_with.solve(&z.x);
    let mu_prime = z.x.dot(&hinv_x);
    if !(mu_prime < 1.0) {
        return Err(Error::Singular { min_eigenvalue: 0.0 });
    }
    Ok(a_norm(&hinv_x, a) * r_in.abs() / (1.0 - mu_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_linear_gaussian, Dataset, Direction, SyntheticConfig};
    use crate::ridge::fit_ridge;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn zero_residual_point_has_zero_sensitivity() {
        let ds = generate_linear_gaussian(&SyntheticConfig::with_unit_theta(40, 3, 0.3, 1)).unwrap().0;
        let sol = fit_ridge(&ds, 0.5).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.2, 0.5]);
        let z = DataPoint::new(x.clone(), x.dot(sol.theta_hat()));
        assert!(sensitivity_linreg(&sol, &z, &Matrix::identity(3, 3)).unwrap() < 1e-15);
    }

    #[test]
    fn two_point_hand_example() {
        let ds = Dataset::new(1, vec![DataPoint::from_slice(&[1.0], 1.0), DataPoint::from_slice(&[1.0], 0.0)]).unwrap();
        let sol = fit_ridge(&ds, 0.0).unwrap();
        let z = DataPoint::from_slice(&[1.0], 1.0);
        let delta = sensitivity_linreg(&sol, &z, &Matrix::identity(1, 1)).unwrap();
        assert!((delta - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_two_refits() {
        let mut rng = rng_from_seed(17);
        for trial in 0..100 {
            let d = rng.random_range(1..=6);
            let n = rng.random_range(d + 2..40);
            let ds = generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, d, 0.5, trial)).unwrap().0;
            let lambda = [0.0, 0.1, 1.0][trial as usize % 3];
            let x = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let z = DataPoint::new(x, rng.random_range(-1.0..1.0));
            let b = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let a = &b * b.transpose() + Matrix::identity(d, d);

            let sol = fit_ridge(&ds, lambda).unwrap();
            let with = fit_ridge(&crate::data::adjacent(&ds, &z, Direction::Add).unwrap(), lambda).unwrap();
            let direct = a_norm(&(with.theta_hat() - sol.theta_hat()), &a);
            let out = sensitivity_linreg(&sol, &z, &a).unwrap();
            let inn = sensitivity_linreg_in_sample(&with, &z, &a).unwrap();
            assert!((out - direct).abs() < 1e-9 * direct.max(1.0), "{out} vs {direct}");
            assert!((inn - direct).abs() < 1e-9 * direct.max(1.0), "{inn} vs {direct}");
        }
    }
}
