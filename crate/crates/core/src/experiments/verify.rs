//! Invariant and Monte-Carlo certification suite.

use rand::Rng;

use crate::accounting::{
    compose_advanced, compose_simple, gaussian_delta_exact, gaussian_eps_exact, ops_dp_agnostic, ops_pdp_agnostic,
    ops_pdp_bound, ops_pdp_two_sided, pdp_dataset_report, sensitivity_linreg, sensitivity_smooth_exact, sensitivity_smooth_quasinewton,
    verify_pdp_mc_multi, GaussianLaw, PdpBudget, SmoothProblem,
};
use crate::data::{adjacent, generate_linear_gaussian, normalize_clip, DataPoint, Dataset, Direction, SyntheticConfig};
use crate::error::Result;
use crate::generalization::{empirical_gap, gen_bound, ops_sample_set};
use crate::mechanisms::{MechanismKind, MechanismSpec, NoiseDesign};
use crate::ridge::{fit_ridge, min_eigenvalue};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::{Matrix, Vector};

use super::{csv_table, num, run_fig1, ExperimentConfig, OutputFile};

/// Outcome of one check. `seed` reproduces the failing instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub stderr: Option<f64>,
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub files: Vec<OutputFile>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `key=value` line per check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "check={} status={} samples={} stderr={} seed={} detail=\"{}\"\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.samples,
                c.stderr.map_or_else(|| "na".to_string(), |v| format!("{v:.3e}")),
                c.seed,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("total={} failed={}\n", self.checks.len(), failed));
        s
    }
}

fn random_instance(rng: &mut SimRng, seed: u64) -> Result<(Dataset, f64)> {
    let d = rng.random_range(1..=6);
    let n = rng.random_range(d + 3..=120);
    let ds = generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, d, rng.random_range(0.05..0.5), seed))?.0;
    Ok((ds, [0.0, 0.1, 1.0][rng.random_range(0..3)]))
}

fn random_target(rng: &mut SimRng, d: usize) -> DataPoint {
    let mut x = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    x /= x.norm().max(1.0);
    DataPoint::new(x, rng.random_range(-1.0..1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn check_ridge_identities(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_from_seed(seed);
    let mut worst = [0.0f64; 4];
    let count = 50;
    for i in 0..count {
        let (ds, lambda) = random_instance(&mut rng, derive_seed(seed, i))?;
        let z = random_target(&mut rng, ds.d());
        let sol = fit_ridge(&ds, lambda)?;
        let with = fit_ridge(&adjacent(&ds, &z, Direction::Add)?, lambda)?;
        let lev = sol.leverage(&z.x)?;
        let mu_in = with.leverage(&z.x)?.mu;
        worst[0] = worst[0].max((mu_in - lev.mu_prime).abs());
        worst[1] = worst[1].max(((with.ln_det() - sol.ln_det()) - lev.mu.ln_1p()).abs());
        worst[2] = worst[2].max((with.residual(&z)? - sol.residual(&z)? / (1.0 + lev.mu)).abs());
        let up = sol.rank_one_update(&z, Direction::Add)?;
        worst[3] = worst[3].max((up.theta_hat() - with.theta_hat()).amax());
    }
    Ok(CheckResult {
        name: "ridge-identities",
        passed: worst[0] < 1e-10 && worst[1] < 1e-8 && worst[2] < 1e-10 && worst[3] < 1e-10,
        samples: count as usize,
        stderr: None,
        seed,
        detail: format!(
            "max errors: leverage {:.1e}, log-det {:.1e}, residual {:.1e}, update {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    })
}

fn check_sensitivity(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    let count = 50;
    for i in 0..count {
        let (ds, lambda) = random_instance(&mut rng, derive_seed(seed, i))?;
        let z = random_target(&mut rng, ds.d());
        let d = ds.d();
        let b = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + Matrix::identity(d, d);
        let sol = fit_ridge(&ds, lambda)?;
        let with_ds = adjacent(&ds, &z, Direction::Add)?;
        let with = fit_ridge(&with_ds, lambda)?;
        let direct = crate::accounting::a_norm(&(with.theta_hat() - sol.theta_hat()), &a);
        let add = sensitivity_linreg(&sol, &z, &a)?;
        // Removing z from [Z, z] gives back Z: same difference, same norm.
        let back = fit_ridge(&adjacent(&with_ds, &z, Direction::Remove)?, lambda)?;
        let remove = crate::accounting::a_norm(&(with.theta_hat() - back.theta_hat()), &a);
        worst = worst.max(rel(add, direct)).max(rel(remove, direct));
    }
    Ok(CheckResult {
        name: "sensitivity-closed-form",
        passed: worst < 1e-9,
        samples: count as usize,
        stderr: None,
        seed,
        detail: format!("max relative error {worst:.1e}"),
    })
}

/// OPS laws `N(θ̂, (γH)⁻¹)` on `Z` and `[Z, z]`.
pub(crate) fn ops_pair(ds: &Dataset, z: &DataPoint, lambda: f64, gamma: f64) -> Result<(GaussianLaw, GaussianLaw)> {
    let sol = fit_ridge(ds, lambda)?;
    let with = fit_ridge(&adjacent(ds, z, Direction::Add)?, lambda)?;
    Ok((
        GaussianLaw::from_precision(sol.theta_hat().clone(), &(sol.h() * gamma))?,
        GaussianLaw::from_precision(with.theta_hat().clone(), &(with.h() * gamma))?,
    ))
}

/// A random OPS pair on row-normalized data, reproducible from `seed`.
/// Even seeds target an external point, odd ones a row of the data.
pub fn ops_instance(seed: u64) -> Result<OpsInstance> {
    let mut rng = rng_from_seed(seed);
    let d = rng.random_range(1..=10);
    let n = rng.random_range(d + 2..=200);
    let ds = normalize_clip(&generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, d, 0.3, derive_seed(seed, 0)))?.0);
    let lambda = [0.1, 1.0][rng.random_range(0..2)];
    let gamma = 10f64.powf(rng.random_range(-1.0..2.0));
    let (base, z) = if seed.is_multiple_of(2) {
        let z = random_target(&mut rng, d);
        (ds, z)
    } else {
        let k = rng.random_range(0..ds.n());
        (ds.without(k), ds.point(k).clone())
    };
    Ok(OpsInstance { base, z, lambda, gamma })
}

#[derive(Debug, Clone)]
pub struct OpsInstance {
    pub base: Dataset,
    pub z: DataPoint,
    pub lambda: f64,
    pub gamma: f64,
}

impl OpsInstance {
    /// Printed bounds `(eps_out, eps_in)` and the two-sided reference bound.
    pub fn bounds(&self, delta: f64) -> Result<([f64; 2], f64)> {
        let sol = fit_ridge(&self.base, self.lambda)?;
        let b = ops_pdp_bound(&sol, &self.z, self.gamma, delta)?;
        let lev = sol.leverage(&self.z.x)?;
        let r = sol.residual(&self.z)?;
        Ok(([b.eps_out, b.eps_in], ops_pdp_two_sided(lev, r, r / (1.0 + lev.mu), self.gamma, delta)?))
    }

    pub fn laws(&self) -> Result<(GaussianLaw, GaussianLaw)> {
        ops_pair(&self.base, &self.z, self.lambda, self.gamma)
    }
}

fn check_ops_mc(cfg: &ExperimentConfig, seed: u64) -> Result<[CheckResult; 2]> {
    let delta = 1e-3;
    let instances = 8;
    let mut printed = (true, 0usize, f64::NEG_INFINITY, 0.0, seed);
    let mut two_sided = (true, f64::NEG_INFINITY, 0.0, seed);
    for i in 0..instances {
        let is = derive_seed(seed, i);
        let inst = ops_instance(is)?;
        let (b, ts) = inst.bounds(delta)?;
        let (p, q) = inst.laws()?;
        let v = verify_pdp_mc_multi(&p, &q, &[b[0], b[1], ts], cfg.mc_samples, derive_seed(is, 1))?;
        for x in &v[..2] {
            let (dh, se) = x.worst();
            if !x.passes(delta) {
                printed.0 = false;
                printed.1 += 1;
            }
            if dh - delta > printed.2 {
                printed = (printed.0, printed.1, dh - delta, se, is);
            }
        }
        let (dh, se) = v[2].worst();
        two_sided.0 &= v[2].passes(delta);
        if dh - delta > two_sided.1 {
            two_sided = (two_sided.0, dh - delta, se, is);
        }
    }
    Ok([
        CheckResult {
            name: "ops-bound-mc",
            passed: printed.0,
            samples: cfg.mc_samples,
            stderr: Some(printed.3),
            seed: printed.4,
            detail: format!(
                "{instances} instances at delta={delta}; {} of {} printed bounds exceeded; worst delta_hat-delta={:.3e}",
                printed.1,
                2 * instances,
                printed.2
            ),
        },
        CheckResult {
            name: "ops-two-sided-mc",
            passed: two_sided.0,
            samples: cfg.mc_samples,
            stderr: Some(two_sided.2),
            seed: two_sided.3,
            detail: format!("{instances} instances at delta={delta}; worst delta_hat-delta={:.3e}", two_sided.1),
        },
    ])
}

fn gaussian_shift_pair(m: f64) -> Result<(GaussianLaw, GaussianLaw)> {
    let cov = Matrix::identity(2, 2);
    Ok((
        GaussianLaw::from_covariance(Vector::zeros(2), &cov)?,
        GaussianLaw::from_covariance(Vector::from_vec(vec![m, 0.0]), &cov)?,
    ))
}

fn check_gaussian_exact(cfg: &ExperimentConfig, seed: u64) -> Result<CheckResult> {
    let mut passed = true;
    let mut max_z = 0.0f64;
    let mut max_se = 0.0f64;
    for (k, m) in [0.3, 1.0, 3.0].into_iter().enumerate() {
        let (p, q) = gaussian_shift_pair(m)?;
        let eps = [0.0, 0.5, 1.5];
        for v in verify_pdp_mc_multi(&p, &q, &eps, cfg.mc_samples, derive_seed(seed, k as u64))? {
            let exact = gaussian_delta_exact(m, v.eps_tested);
            for j in 0..2 {
                // A zero empirical stderr says nothing when exact δ ≪ 1/n.
                let se = v.stderr[j].max((exact * (1.0 - exact) / v.n_samples as f64).sqrt());
                let z = (v.delta_hat[j] - exact).abs() / se;
                passed &= z <= 3.0;
                max_z = max_z.max(z);
                max_se = max_se.max(v.stderr[j]);
            }
        }
    }
    Ok(CheckResult {
        name: "gaussian-exact-mc",
        passed,
        samples: cfg.mc_samples,
        stderr: Some(max_se),
        seed,
        detail: format!("max |delta_hat-exact|/stderr = {max_z:.2}"),
    })
}

fn check_mutation(cfg: &ExperimentConfig, seed: u64) -> Result<CheckResult> {
    let delta = 1e-3;
    let m = 1.0;
    let eps = gaussian_eps_exact(m, delta);
    let (p, q) = gaussian_shift_pair(m)?;
    let v = verify_pdp_mc_multi(&p, &q, &[eps, 0.5 * eps], cfg.mc_samples, seed)?;
    let (dh, se) = v[1].worst();
    Ok(CheckResult {
        name: "mutation-detected",
        passed: v[0].passes(delta) && !v[1].passes(delta),
        samples: cfg.mc_samples,
        stderr: Some(se),
        seed,
        detail: format!("exact eps={eps:.4} passes; halved eps gives delta_hat={dh:.3e} vs delta={delta}"),
    })
}

fn check_dominance(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_from_seed(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let delta = 1e-6;
    for i in 0..10 {
        let n = rng.random_range(20..200);
        let d = rng.random_range(1..5);
        let ds = normalize_clip(&generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, d, 0.3, derive_seed(seed, i)))?.0);
        let lambda = rng.random_range(0.5..5.0);
        let gamma = rng.random_range(1.0..10.0);
        let rep = pdp_dataset_report(&ds, &MechanismSpec::Ops { lambda, gamma }, delta, 1)?;
        let dp = ops_dp_agnostic(n, lambda, gamma, delta)?;
        for (k, p) in rep.points.iter().enumerate() {
            let loo = ds.without(k);
            let sol = fit_ridge(&loo, lambda)?;
            let agn = ops_pdp_agnostic(lambda, min_eigenvalue(&loo), gamma, delta, sol.residual(ds.point(k))?)?;
            worst = worst.max(p.eps - agn).max(agn - dp);
            count += 1;
        }
    }
    Ok(CheckResult {
        name: "agnostic-dominance",
        passed: worst <= 1e-12,
        samples: count,
        stderr: None,
        seed,
        detail: format!("max violation of eps_in <= agnostic pDP <= agnostic DP: {worst:.3e}"),
    })
}

fn check_jensen(seed: u64) -> Result<CheckResult> {
    let mut passed = true;
    for i in 0..5 {
        let ds = normalize_clip(&generate_linear_gaussian(&SyntheticConfig::with_unit_theta(80, 3, 0.3, derive_seed(seed, i)))?.0);
        for spec in [
            MechanismSpec::Ops { lambda: 1.0, gamma: 2.0 },
            MechanismSpec::Gaussian { design: NoiseDesign::Fisher, gamma: 0.5, lambda: 1.0 },
        ] {
            let rep = pdp_dataset_report(&ds, &spec, 1e-4, 4)?;
            for j in 1..=4 {
                passed &= rep.moments[0].powi(j as i32) <= rep.moments[j - 1] * (1.0 + 1e-12);
            }
        }
    }
    Ok(CheckResult { name: "moment-jensen", passed, samples: 10, stderr: None, seed, detail: "moments 1..4".into() })
}

fn check_composition(seed: u64) -> Result<CheckResult> {
    let simple = |k: usize| compose_simple(&vec![PdpBudget { eps: 0.1, delta: 0.0 }; k]).eps;
    let crossover = (1..10_000).find(|&k| compose_advanced(0.1, 0.0, k, 1e-6).eps < simple(k));
    let holds_after = crossover.is_some_and(|c| (c..c + 1000).all(|k| compose_advanced(0.1, 0.0, k, 1e-6).eps < simple(k)));
    Ok(CheckResult {
        name: "composition-crossover",
        passed: holds_after,
        samples: 1000,
        stderr: None,
        seed,
        detail: format!("advanced below simple from k={crossover:?} at eps=0.1"),
    })
}

fn check_quasinewton(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (ds, lambda) = random_instance(&mut rng, derive_seed(seed, i))?;
        let lambda = lambda.max(0.1);
        let z = random_target(&mut rng, ds.d());
        let problem = SmoothProblem::squared(lambda)?;
        let a = Matrix::identity(ds.d(), ds.d());
        let exact = sensitivity_smooth_exact(&problem, &ds, &z, &a)?;
        let qn = sensitivity_smooth_quasinewton(&problem, &ds, &z, 1, &a)?;
        worst = worst.max((exact - qn).abs());
    }
    Ok(CheckResult {
        name: "quasinewton-constant-hessian",
        passed: worst < 1e-10,
        samples: 20,
        stderr: None,
        seed,
        detail: format!("max |exact-qn| = {worst:.1e}"),
    })
}

fn check_generalization(cfg: &ExperimentConfig, seed: u64) -> Result<CheckResult> {
    let syn = SyntheticConfig::with_unit_theta(20, 2, 0.2, seed);
    let spec = MechanismSpec::Ops { lambda: 1.0, gamma: 0.5 };
    let trials = cfg.trials.min(2000);
    let gap = empirical_gap(&spec, &syn, 1.0, trials, derive_seed(seed, 1))?;
    let bound = gen_bound(&ops_sample_set(&syn, 1.0, 0.5, 1e-3, trials.min(500), 10, derive_seed(seed, 2), None)?)?;
    Ok(CheckResult {
        name: "generalization-dominance",
        passed: gap.gap <= bound + 3.0 * gap.stderr,
        samples: trials,
        stderr: Some(gap.stderr),
        seed,
        detail: format!("gap={:.4e} bound={bound:.4e}", gap.gap),
    })
}

fn check_determinism(seed: u64) -> Result<CheckResult> {
    let ds = generate_linear_gaussian(&SyntheticConfig::with_unit_theta(200, 2, 0.1, seed))?.0;
    let specs = [
        MechanismSpec::Gaussian { design: NoiseDesign::Isotropic, gamma: 1.0, lambda: 1.0 },
        MechanismSpec::Gaussian { design: NoiseDesign::Democratic, gamma: 1.0, lambda: 1.0 },
        MechanismSpec::Gaussian { design: NoiseDesign::Fisher, gamma: 1.0, lambda: 1.0 },
        MechanismSpec::Ops { lambda: 1.0, gamma: 1.0 },
        MechanismSpec::ObjPert { sigma: 1.0, lambda: 1.0 },
        MechanismSpec::AdaOps { eps: 1.0, delta: 0.01, kappa: 1.0 },
    ];
    let mut passed = true;
    for spec in &specs {
        passed &= spec.release(&ds, seed)? == spec.release(&ds, seed)?;
    }
    Ok(CheckResult {
        name: "mechanism-determinism",
        passed,
        samples: specs.len(),
        stderr: None,
        seed,
        detail: MechanismKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" "),
    })
}

fn check_fig1(cfg: &ExperimentConfig, seed: u64) -> Result<CheckResult> {
    let fcfg = ExperimentConfig { seed, search_budget: cfg.search_budget.min(50), ..cfg.clone() };
    let r = run_fig1(&fcfg)?;
    let finite = r.report.points.iter().all(|p| p.eps >= 0.0 && p.eps.is_finite());
    Ok(CheckResult {
        name: "fig1-gap",
        passed: finite && r.report.quantiles.median * 10.0 <= r.dp_eps && r.for_all.analytic_upper <= r.dp_eps,
        samples: r.report.points.len(),
        stderr: None,
        seed,
        detail: r.summary(),
    })
}

/// Runs every check; failures are reported, not returned as errors.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let s = |k: u64| derive_seed(cfg.seed, k);
    let [ops_printed, ops_two_sided] = check_ops_mc(cfg, s(3))?;
    let checks = vec![
        check_ridge_identities(s(1))?,
        check_sensitivity(s(2))?,
        ops_printed,
        ops_two_sided,
        check_gaussian_exact(cfg, s(4))?,
        check_mutation(cfg, s(5))?,
        check_dominance(s(6))?,
        check_jensen(s(7))?,
        check_composition(s(8))?,
        check_quasinewton(s(9))?,
        check_generalization(cfg, s(10))?,
        check_determinism(s(11))?,
        check_fig1(cfg, s(12))?,
    ];
    let table = csv_table(
        &["check", "status", "samples", "stderr", "seed", "detail"],
        checks.iter().map(|c| {
            vec![
                c.name.to_string(),
                if c.passed { "PASS" } else { "FAIL" }.to_string(),
                c.samples.to_string(),
                c.stderr.map_or_else(String::new, num),
                c.seed.to_string(),
                format!("\"{}\"", c.detail.replace('"', "'")),
            ]
        }),
    );
    Ok(VerifyReport { checks, files: vec![OutputFile { name: "verify.csv".into(), contents: table }] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_at_reduced_scale() {
        let cfg = ExperimentConfig { n: 300, trials: 300, mc_samples: 100_000, ..Default::default() };
        let rep = run_verify(&cfg).unwrap();
        let summary = rep.summary();
        // The printed OPS bounds are exceeded on some instances; everything
        // else, including the two-sided reference bound, must pass.
        for c in rep.checks.iter().filter(|c| c.name != "ops-bound-mc") {
            assert!(c.passed, "{summary}");
        }
        assert!(summary.contains("check=ops-two-sided-mc status=PASS samples=100000"));
        assert_eq!(rep.files[0].contents.lines().count(), rep.checks.len() + 1);
    }

    #[test]
    fn printed_ops_bound_exceeded_at_high_leverage() {
        // n=14, d=8 with μ ≈ 0.56: the out-of-sample form already fails.
        let mut seed = 0;
        let inst = loop {
            let inst = ops_instance(seed).unwrap();
            let mu = fit_ridge(&inst.base, inst.lambda).unwrap().leverage(&inst.z.x).unwrap().mu;
            if mu > 0.4 && inst.gamma > 2.0 {
                break inst;
            }
            seed += 1;
        };
        let (b, ts) = inst.bounds(1e-3).unwrap();
        let (p, q) = inst.laws().unwrap();
        let v = verify_pdp_mc_multi(&p, &q, &[b[1], ts], 200_000, 5).unwrap();
        assert!(!v[0].passes(1e-3), "seed {seed}: {v:?}");
        assert!(v[1].passes(1e-3));
    }
}
