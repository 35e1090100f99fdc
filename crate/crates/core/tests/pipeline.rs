use approx::{assert_abs_diff_eq, assert_relative_eq};
use pdp_core::accounting::{
    gaussian_delta_exact, gaussian_eps_exact, ops_pdp_bound_in_sample, sensitivity_linreg_in_sample, BoundUsed,
};
use pdp_core::data::{generate_linear_gaussian, load_csv, normalize_clip};
use pdp_core::experiments::{write_outputs, ExperimentConfig, OutputFile};
use pdp_core::ridge::fit_ridge;
use pdp_core::{pdp_dataset_report, sensitivity_linreg, Matrix, MechanismSpec, NoiseDesign, SyntheticConfig};

fn data(n: usize, d: usize, seed: u64) -> pdp_core::Dataset {
    normalize_clip(&generate_linear_gaussian(&SyntheticConfig::with_unit_theta(n, d, 0.3, seed)).unwrap().0)
}

#[test]
fn csv_round_trip_is_bitwise() {
    let ds = data(64, 4, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.save_csv(&path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.n(), ds.n());
    assert!(ds.iter().zip(back.iter()).all(|(a, b)| a.bitwise_eq(b)));
    assert_eq!(back.to_csv_string(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn report_rows_match_direct_evaluation() {
    let ds = data(80, 3, 2);
    let (lambda, gamma, delta) = (0.5, 3.0, 1e-5);
    let rep = pdp_dataset_report(&ds, &MechanismSpec::Ops { lambda, gamma }, delta, 3).unwrap();
    let sol = fit_ridge(&ds, lambda).unwrap();
    assert_eq!(rep.points.len(), ds.n());
    for (i, p) in rep.points.iter().enumerate() {
        let z = ds.point(i);
        let b = ops_pdp_bound_in_sample(&sol, z, gamma, delta).unwrap();
        assert_relative_eq!(p.eps, b.eps, max_relative = 1e-12);
        assert_relative_eq!(p.mu, p.mu_prime / (1.0 - p.mu_prime), max_relative = 1e-12);
        assert_relative_eq!(p.residual, sol.residual(z).unwrap(), max_relative = 1e-12);
        assert!(matches!(p.bound_used, BoundUsed::OpsOut | BoundUsed::OpsIn));
    }
    let eps = rep.eps_values();
    for (k, m) in rep.moments.iter().enumerate() {
        let direct = eps.iter().map(|e| e.powi(k as i32 + 1)).sum::<f64>() / eps.len() as f64;
        assert_relative_eq!(*m, direct, max_relative = 1e-12);
    }
    let csv = rep.to_csv_string();
    assert!(csv.starts_with("index,mu,mu_prime,residual,eps\n"));
    assert!(csv.lines().last().unwrap().contains("moment3="));
}

#[test]
fn gaussian_report_uses_in_sample_sensitivity() {
    let ds = data(50, 2, 3);
    let a = Matrix::identity(2, 2);
    let spec = MechanismSpec::Gaussian { design: NoiseDesign::Explicit(a.clone()), gamma: 0.25, lambda: 1.0 };
    let rep = pdp_dataset_report(&ds, &spec, 1e-6, 2).unwrap();
    let sol = fit_ridge(&ds, 1.0).unwrap();
    for (i, p) in rep.points.iter().enumerate() {
        let z = ds.point(i);
        let s_in = sensitivity_linreg_in_sample(&sol, z, &a).unwrap();
        let s_out = sensitivity_linreg(&fit_ridge(&ds.without(i), 1.0).unwrap(), z, &a).unwrap();
        assert_relative_eq!(s_in, s_out, max_relative = 1e-9);
        assert_relative_eq!(p.eps, 0.25 * s_in * (1.25e6f64).ln().sqrt(), max_relative = 1e-12);
    }
}

#[test]
fn exact_calibration_inverts_divergence() {
    for m in [0.05, 0.3, 1.0, 5.0] {
        for delta in [1e-2, 1e-6, 1e-10] {
            let eps = gaussian_eps_exact(m, delta);
            assert_abs_diff_eq!(gaussian_delta_exact(m, eps), delta, epsilon = delta * 1e-6);
        }
    }
}

#[test]
fn outputs_land_in_the_requested_directory() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b");
    let files = [OutputFile { name: "x.csv".into(), contents: "h\n1\n".into() }];
    write_outputs(&nested, &files).unwrap();
    assert_eq!(std::fs::read_to_string(nested.join("x.csv")).unwrap(), "h\n1\n");

    let cfg_path = dir.path().join("c.cfg");
    std::fs::write(&cfg_path, "delta = 1e-4\ngammas = 1,2\n").unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.delta, 1e-4);
    assert_eq!(cfg.gammas, Some(vec![1.0, 2.0]));
}
