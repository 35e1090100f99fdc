//! Per-point pDP reports for a data set, pDP over the whole domain, and the
//! worst-case DP baseline of Gaussian output perturbation.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{fmt_f64, DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::mechanisms::{MechanismSpec, NoiseDesign};
use crate::ridge::{fit_ridge, max_symmetric_eigenvalue, min_symmetric_eigenvalue, RidgeSolution};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::FiveNumber;
use crate::{Matrix, Vector};

use super::gaussian::gaussian_pdp;
use super::ops::{ops_pdp_bound, ops_pdp_bound_in_sample};
use super::sensitivity::a_norm;

/// Which expression produced a reported ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundUsed {
    /// Closed-form Gaussian mechanism with the per-instance sensitivity.
    Gaussian,
    /// OPS bound in out-of-sample leverage.
    OpsOut,
    /// OPS bound in in-sample leverage.
    OpsIn,
}

impl BoundUsed {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundUsed::Gaussian => "gaussian",
            BoundUsed::OpsOut => "ops-out",
            BoundUsed::OpsIn => "ops-in",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointIndex {
    Row(usize),
    External,
}

impl fmt::Display for PointIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointIndex::Row(i) => write!(f, "{i}"),
            PointIndex::External => f.write_str("external"),
        }
    }
}

/// ε for one (data set, target) pair. `mu`/`mu_prime` are the out-of-sample
/// and in-sample leverages; `residual` is the in-sample residual for rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpPointReport {
    pub index: PointIndex,
    pub mu: f64,
    pub mu_prime: f64,
    pub residual: f64,
    pub eps: f64,
    pub bound_used: BoundUsed,
}

/// Per-row ε of a data set at fixed δ, with moments `E ε^j` for
/// `j = 1..=k` and a five-number summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpDatasetReport {
    pub delta: f64,
    pub points: Vec<PdpPointReport>,
    pub moments: Vec<f64>,
    pub quantiles: FiveNumber,
}

impl PdpDatasetReport {
    pub fn eps_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eps).collect()
    }

    pub fn max_eps(&self) -> f64 {
        self.quantiles.max
    }

    /// `index,mu,mu_prime,residual,eps` rows followed by a `#` trailer with
    /// the moments and quantiles.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("index,mu,mu_prime,residual,eps\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.index,
                fmt_f64(p.mu),
                fmt_f64(p.mu_prime),
                fmt_f64(p.residual),
                fmt_f64(p.eps)
            );
        }
        let mut trailer: Vec<String> =
            self.moments.iter().enumerate().map(|(j, m)| format!("moment{}={}", j + 1, fmt_f64(*m))).collect();
        let q = &self.quantiles;
        for (name, v) in [("q0", q.min), ("q25", q.q25), ("q50", q.median), ("q75", q.q75), ("q100", q.max)] {
            trailer.push(format!("{name}={}", fmt_f64(v)));
        }
        let _ = writeln!(s, "# {}", trailer.join(", "));
        s
    }
}

fn gaussian_params(spec: &MechanismSpec) -> Option<(&NoiseDesign, f64, f64)> {
    match spec {
        MechanismSpec::Gaussian { design, gamma, lambda } => Some((design, *gamma, *lambda)),
        _ => None,
    }
}

/// Per-row pDP of `(Z ∖ zᵢ, zᵢ)` for every row of `ds` under a Gaussian
/// output-perturbation or OPS spec. A data-dependent noise design is
/// realized once on the full data and then treated as fixed.
pub fn pdp_dataset_report(ds: &Dataset, spec: &MechanismSpec, delta: f64, k: usize) -> Result<PdpDatasetReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if ds.is_empty() {
        return Err(Error::param("cannot report on an empty data set"));
    }
    let points: Vec<PdpPointReport> = match spec {
        MechanismSpec::Gaussian { design, gamma, lambda } => {
            let sol = fit_ridge(ds, *lambda)?;
            let a = design.realize(&sol)?;
            (0..ds.n())
                .into_par_iter()
                .map(|i| {
                    let z = ds.point(i);
                    let hinv_x = sol.solve(&z.x);
                    let mu_prime = z.x.dot(&hinv_x);
                    if !(1.0 - mu_prime > 1e-12) {
                        return Err(Error::Singular { min_eigenvalue: 0.0 });
                    }
                    let r_in = sol.residual(z)?;
                    let sens = a_norm(&hinv_x, &a) * r_in.abs() / (1.0 - mu_prime);
                    Ok(PdpPointReport {
                        index: PointIndex::Row(i),
                        mu: mu_prime / (1.0 - mu_prime),
                        mu_prime,
                        residual: r_in,
                        eps: gaussian_pdp(sens, *gamma, delta),
                        bound_used: BoundUsed::Gaussian,
                    })
                })
                .collect::<Result<_>>()?
        }
        MechanismSpec::Ops { lambda, gamma } => {
            let sol = fit_ridge(ds, *lambda)?;
            (0..ds.n())
                .into_par_iter()
                .map(|i| {
                    let z = ds.point(i);
                    let lev = sol.leverage(&z.x)?;
                    if !(1.0 - lev.mu > 1e-12) {
                        return Err(Error::Singular { min_eigenvalue: 0.0 });
                    }
                    let b = ops_pdp_bound_in_sample(&sol, z, *gamma, delta)?;
                    Ok(PdpPointReport {
                        index: PointIndex::Row(i),
                        mu: lev.mu / (1.0 - lev.mu),
                        mu_prime: lev.mu,
                        residual: sol.residual(z)?,
                        eps: b.eps_in,
                        bound_used: BoundUsed::OpsIn,
                    })
                })
                .collect::<Result<_>>()?
        }
        other => {
            return Err(Error::Unsupported(format!(
                "per-instance report for mechanism `{}` (needs a fixed-design Gaussian or OPS spec)",
                other.kind()
            )))
        }
    };
    let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let nf = eps.len() as f64;
    let moments = (1..=k).map(|j| eps.iter().map(|e| e.powi(j as i32)).sum::<f64>() / nf).collect();
    let quantiles = FiveNumber::from_samples(&eps).expect("nonempty");
    Ok(PdpDatasetReport { delta, points, moments, quantiles })
}

/// Result of the domain-wide search.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpForAll {
    /// Largest ε found over the domain `‖x‖ ≤ 1`, `|y| ≤ 1`.
    pub sup_estimate: f64,
    /// Closed-form envelope, always `≥ sup_estimate`.
    pub analytic_upper: f64,
    pub argmax: DataPoint,
}

const REFINE_ITERS: usize = 50;

struct DomainObjective<'a> {
    sol: &'a RidgeSolution,
    kind: Objective,
    delta: f64,
}

enum Objective {
    Gaussian { a: Matrix, gamma: f64 },
    Ops { gamma: f64 },
}

impl DomainObjective<'_> {
    fn eps(&self, z: &DataPoint) -> Result<f64> {
        match &self.kind {
            Objective::Gaussian { a, gamma } => {
                let r = self.sol.residual(z)?;
                let hinv_x = self.sol.solve(&z.x);
                let mu = z.x.dot(&hinv_x).max(0.0);
                Ok(gaussian_pdp(r.abs() / (1.0 + mu) * a_norm(&hinv_x, a), *gamma, self.delta))
            }
            Objective::Ops { gamma } => Ok(ops_pdp_bound(self.sol, z, *gamma, self.delta)?.eps),
        }
    }

    fn envelope(&self) -> Result<f64> {
        let rmax = 1.0 + self.sol.theta_hat().norm();
        match &self.kind {
            Objective::Gaussian { a, gamma } => {
                let hinv = self.sol.h_inverse();
                let m = crate::ridge::symmetrize(&hinv * a * &hinv);
                let lev = max_symmetric_eigenvalue(&m).max(0.0).sqrt();
                Ok(gaussian_pdp(rmax * lev, *gamma, self.delta))
            }
            Objective::Ops { gamma } => {
                let lmin = min_symmetric_eigenvalue(self.sol.h());
                let mu = 1.0 / lmin;
                let l = (2.0 / self.delta).ln();
                Ok(0.5 * mu.ln_1p().max(gamma * mu * rmax * rmax / (1.0 + mu))
                    + 0.5 * mu * l
                    + (gamma * mu * l).sqrt() * rmax)
            }
        }
    }
}

fn project(z: &mut DataPoint) {
    let norm = z.x.norm();
    if norm > 1.0 {
        z.x /= norm;
    }
    z.y = z.y.clamp(-1.0, 1.0);
}

/// Coordinate ascent with step halving from a starting candidate.
fn refine(obj: &DomainObjective<'_>, start: DataPoint) -> Result<(f64, DataPoint)> {
    let d = start.dim();
    let mut best = start;
    let mut best_eps = obj.eps(&best)?;
    let mut step = 0.25;
    for _ in 0..REFINE_ITERS {
        let mut improved = false;
        for coord in 0..=d {
            for sign in [1.0, -1.0] {
                let mut cand = best.clone();
                if coord < d {
                    cand.x[coord] += sign * step;
                } else {
                    cand.y += sign * step;
                }
                project(&mut cand);
                let e = obj.eps(&cand)?;
                if e > best_eps {
                    best_eps = e;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best_eps, best))
}

/// Supremum of ε over out-of-sample targets in `{‖x‖ ≤ 1, |y| ≤ 1}` for the
/// data set behind `sol`: random candidates, each refined by coordinate
/// ascent, plus a closed-form envelope. Candidate `i` depends only on
/// `(seed, i)`, so the estimate is nondecreasing in `search_budget`.
pub fn pdp_for_all(
    sol: &RidgeSolution,
    spec: &MechanismSpec,
    delta: f64,
    search_budget: usize,
    seed: u64,
) -> Result<PdpForAll> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let kind = if let Some((design, gamma, lambda)) = gaussian_params(spec) {
        check_lambda(sol, lambda)?;
        Objective::Gaussian { a: design.realize(sol)?, gamma }
    } else if let MechanismSpec::Ops { lambda, gamma } = spec {
        check_lambda(sol, *lambda)?;
        Objective::Ops { gamma: *gamma }
    } else {
        return Err(Error::Unsupported(format!("pDP-for-all for mechanism `{}`", spec.kind())));
    };
    let obj = DomainObjective { sol, kind, delta };
    let analytic_upper = obj.envelope()?;
    let d = sol.d();
    let mut best = (0.0, DataPoint::new(Vector::zeros(d), 0.0));
    for i in 0..search_budget {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let mut x = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        let cand = DataPoint::new(x, rng.random_range(-1.0..=1.0));
        let (e, z) = refine(&obj, cand)?;
        if e > best.0 {
            best = (e, z);
        }
    }
    Ok(PdpForAll { sup_estimate: best.0, analytic_upper, argmax: best.1 })
}

fn check_lambda(sol: &RidgeSolution, lambda: f64) -> Result<()> {
    if sol.lambda() != lambda {
        return Err(Error::param(format!(
            "spec penalty {lambda} does not match the fitted penalty {}",
            sol.lambda()
        )));
    }
    Ok(())
}

/// Worst-case ε of `N(θ̂, I/γ)` output perturbation with ridge penalty
/// `λ > 0` over data sets of `n` points in `{‖x‖ ≤ 1, |y| ≤ 1}`. Uses
/// `|y − xᵀθ̂| ≤ 1 + √n/(2√λ)` and `‖H⁻¹x‖ ≤ min{1/λ, 1/(2√λ)}` for `H ⪰ λI + xxᵀ`.
pub fn gaussian_dp_worst_case(n: usize, lambda: f64, gamma: f64, delta: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("worst-case DP needs lambda > 0, got {lambda}")));
    }
    let rmax = 1.0 + (n as f64).sqrt() / (2.0 * lambda.sqrt());
    let lev = (1.0 / lambda).min(0.5 / lambda.sqrt());
    Ok(gaussian_pdp(rmax * lev, gamma, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{adjacent, generate_linear_gaussian, normalize_clip, Direction, SyntheticConfig};
    use crate::accounting::sensitivity_linreg;

    fn fig1_like(n: usize, seed: u64) -> Dataset {
        normalize_clip(&generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, 5, 0.2, seed)).unwrap().0)
    }

    fn gaussian_spec(gamma: f64) -> MechanismSpec {
        MechanismSpec::Gaussian { design: NoiseDesign::Explicit(Matrix::identity(5, 5)), gamma, lambda: 1.0 }
    }

    #[test]
    fn in_sample_rows_match_leave_one_out_refits() {
        let ds = fig1_like(40, 1);
        let rep = pdp_dataset_report(&ds, &gaussian_spec(0.5), 1e-6, 2).unwrap();
        let a = Matrix::identity(5, 5);
        for (i, p) in rep.points.iter().enumerate().step_by(7) {
            let loo = fit_ridge(&ds.without(i), 1.0).unwrap();
            let sens = sensitivity_linreg(&loo, ds.point(i), &a).unwrap();
            assert!((p.eps - gaussian_pdp(sens, 0.5, 1e-6)).abs() < 1e-10);
            assert!((p.mu - loo.leverage(&ds.point(i).x).unwrap().mu).abs() < 1e-10);
        }
        let ops = pdp_dataset_report(&ds, &MechanismSpec::Ops { lambda: 1.0, gamma: 2.0 }, 1e-6, 3).unwrap();
        for (i, p) in ops.points.iter().enumerate().step_by(9) {
            let loo = fit_ridge(&ds.without(i), 1.0).unwrap();
            let b = ops_pdp_bound(&loo, ds.point(i), 2.0, 1e-6).unwrap();
            assert!((p.eps - b.eps_in).abs() < 1e-10);
        }
        assert_eq!(ops.moments.len(), 3);
    }

    #[test]
    fn moments_obey_jensen() {
        let rep = pdp_dataset_report(&fig1_like(100, 2), &MechanismSpec::Ops { lambda: 0.5, gamma: 3.0 }, 1e-4, 4).unwrap();
        for j in 1..=4 {
            assert!(rep.moments[0].powi(j as i32) <= rep.moments[j - 1] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn duplication_dilutes_leverage() {
        let ds = fig1_like(30, 3);
        let dup = Dataset::new(5, ds.iter().flat_map(|p| std::iter::repeat_n(p.clone(), 10)).collect()).unwrap();
        for spec in [gaussian_spec(1.0 / 16.0), MechanismSpec::Ops { lambda: 1.0, gamma: 1.0 }] {
            let a = pdp_dataset_report(&ds, &spec, 1e-6, 2).unwrap();
            let b = pdp_dataset_report(&dup, &spec, 1e-6, 2).unwrap();
            assert!(b.max_eps() < a.max_eps());
        }
    }

    #[test]
    fn identical_rows_have_equal_eps() {
        let p = DataPoint::from_slice(&[0.6, 0.8], 0.5);
        let ds = Dataset::new(2, vec![p; 12]).unwrap();
        let spec = MechanismSpec::Gaussian { design: NoiseDesign::Fisher, gamma: 1.0, lambda: 0.3 };
        let rep = pdp_dataset_report(&ds, &spec, 1e-3, 2).unwrap();
        assert!(rep.points.iter().all(|q| q.eps == rep.points[0].eps));
        let csv = rep.to_csv_string();
        assert!(csv.starts_with("index,mu,mu_prime,residual,eps\n0,"));
        assert!(csv.lines().last().unwrap().starts_with("# moment1="));
        assert!(csv.contains("q50="));
    }

    #[test]
    fn unsupported_specs_are_rejected() {
        let ds = fig1_like(20, 4);
        let spec = MechanismSpec::ObjPert { sigma: 1.0, lambda: 1.0 };
        assert!(matches!(pdp_dataset_report(&ds, &spec, 1e-3, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pdp_for_all_symmetric_case() {
        // θ̂ = 0 and XᵀX = I: the envelope uses residual 1 and leverage 1.
        let ds = Dataset::new(
            2,
            vec![DataPoint::from_slice(&[1.0, 0.0], 0.0), DataPoint::from_slice(&[0.0, 1.0], 0.0)],
        )
        .unwrap();
        let sol = fit_ridge(&ds, 0.0).unwrap();
        let spec = MechanismSpec::Gaussian { design: NoiseDesign::Explicit(Matrix::identity(2, 2)), gamma: 1.0, lambda: 0.0 };
        let r = pdp_for_all(&sol, &spec, 1e-3, 20, 1).unwrap();
        assert!((r.analytic_upper - gaussian_pdp(1.0, 1.0, 1e-3)).abs() < 1e-14);
        assert!(r.sup_estimate <= r.analytic_upper);
    }

    #[test]
    fn pdp_for_all_is_monotone_and_bounded() {
        let ds = fig1_like(60, 5);
        for spec in [gaussian_spec(0.25), MechanismSpec::Ops { lambda: 1.0, gamma: 4.0 }] {
            let sol = fit_ridge(&ds, 1.0).unwrap();
            let mut prev = 0.0;
            for budget in [1, 3, 10, 30] {
                let r = pdp_for_all(&sol, &spec, 1e-6, budget, 9).unwrap();
                assert!(r.sup_estimate >= prev);
                assert!(r.sup_estimate <= r.analytic_upper * (1.0 + 1e-12));
                assert!(r.argmax.x.norm() <= 1.0 + 1e-12 && r.argmax.y.abs() <= 1.0);
                prev = r.sup_estimate;
            }
        }
    }

    #[test]
    fn pdp_for_all_tight_on_aligned_instance() {
        // H = 100·I and θ̂ along e₁: the worst target is x = −e₁, y = 1.
        let d = 3;
        let mut pts = Vec::new();
        for j in 0..d {
            let mut x = vec![0.0; d];
            x[j] = 1.0;
            let y = if j == 0 { 0.5 } else { 0.0 };
            pts.extend(std::iter::repeat_n(DataPoint::from_slice(&x, y), 100));
        }
        let ds = Dataset::new(d, pts).unwrap();
        let sol = fit_ridge(&ds, 0.0).unwrap();
        let spec = MechanismSpec::Gaussian { design: NoiseDesign::Explicit(Matrix::identity(d, d)), gamma: 2.0, lambda: 0.0 };
        let r = pdp_for_all(&sol, &spec, 1e-6, 50, 3).unwrap();
        assert!(r.sup_estimate >= 0.9 * r.analytic_upper, "{} vs {}", r.sup_estimate, r.analytic_upper);
    }

    #[test]
    fn worst_case_dominates_sensitivities() {
        let dp = gaussian_dp_worst_case(50, 1.0, 1.0, 1e-6).unwrap();
        let ds = fig1_like(49, 6);
        let sol = fit_ridge(&ds, 1.0).unwrap();
        let a = Matrix::identity(5, 5);
        for (x, y) in [([1.0, 0.0, 0.0, 0.0, 0.0], 1.0), ([0.0, -0.6, 0.8, 0.0, 0.0], -1.0)] {
            let z = DataPoint::from_slice(&x, y);
            let with = fit_ridge(&adjacent(&ds, &z, Direction::Add).unwrap(), 1.0).unwrap();
            let sens = a_norm(&(with.theta_hat() - sol.theta_hat()), &a);
            assert!(gaussian_pdp(sens, 1.0, 1e-6) <= dp);
        }
        assert!(gaussian_dp_worst_case(50, 0.0, 1.0, 1e-6).is_err());
    }
}
