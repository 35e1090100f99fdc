//! Mean squared error of OPS and AdaOPS on a fixed design with fresh
//! Gaussian responses, against closed-form predictions and the
//! Cramér–Rao term.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{DataPoint, Dataset, SyntheticConfig};
use crate::error::Result;
use crate::mechanisms::{adaops, ops_sample_from, AdaOpsParams};
use crate::ridge::fit_ridge;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::MeanEstimate;
use crate::{Matrix, Vector};

use super::{csv_table, num, ExperimentConfig, OutputFile};

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    /// `"ops"` or `"adaops"`.
    pub mechanism: &'static str,
    pub gamma: f64,
    pub lambda: f64,
    pub mse: f64,
    pub stderr: f64,
    /// `σ²tr(H⁻¹)(1 + 1/γ) + λ²‖H⁻¹θ₀‖²`.
    pub printed: f64,
    /// `σ²tr(H⁻¹XᵀXH⁻¹) + tr(H⁻¹)/γ + λ²‖H⁻¹θ₀‖²`.
    pub exact: f64,
    /// `σ²tr(H⁻¹)`.
    pub cramer_rao: f64,
    /// Fraction of trials with `λ_n = 0` (AdaOPS only).
    pub lambda_zero_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EfficiencyResult {
    pub design: Matrix,
    pub theta0: Vector,
    pub rows: Vec<EfficiencyRow>,
    pub files: Vec<OutputFile>,
}

struct Design {
    rows: Vec<Vector>,
    mean: Vector,
    sigma: f64,
    d: usize,
}

impl Design {
    fn draw(&self, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from_seed(seed);
        let pts = self
            .rows
            .iter()
            .zip(self.mean.iter())
            .map(|(x, m)| DataPoint::new(x.clone(), m + self.sigma * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Dataset::new(self.d, pts)
    }
}

fn predictions(gram: &Matrix, theta0: &Vector, sigma: f64, lambda: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    let sol = crate::ridge::RidgeSolution::from_statistics(gram.clone(), Vector::zeros(theta0.len()), lambda, 0)?;
    let hinv = sol.h_inverse();
    let bias = lambda * lambda * (&hinv * theta0).norm_squared();
    let cr = sigma * sigma * hinv.trace();
    let exact = sigma * sigma * (&hinv * gram * &hinv).trace() + hinv.trace() / gamma + bias;
    Ok((cr * (1.0 + 1.0 / gamma) + bias, exact, cr))
}

pub fn run_efficiency(cfg: &ExperimentConfig) -> Result<EfficiencyResult> {
    cfg.validate()?;
    let syn = SyntheticConfig::with_unit_theta(cfg.n, cfg.d, cfg.sigma_data, derive_seed(cfg.seed, 0));
    let theta0 = syn.theta0.clone();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 1));
    let rows: Vec<Vector> = (0..cfg.n).map(|_| syn.sample_features(&mut rng)).collect();
    let mean: Vector = Vector::from_iterator(cfg.n, rows.iter().map(|x| x.dot(&theta0)));
    let design = Design { rows, mean, sigma: cfg.sigma_data, d: cfg.d };
    let x = Matrix::from_fn(cfg.n, cfg.d, |i, j| design.rows[i][j]);
    let gram = x.transpose() * &x;

    let mut out = Vec::new();
    for (k, gamma) in cfg.gamma_sweep(&[1.0, 10.0, 100.0, 1000.0]).into_iter().enumerate() {
        let seed = derive_seed(cfg.seed, 100 + k as u64);
        let errs: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let ts = derive_seed(seed, t as u64);
                let sol = fit_ridge(&design.draw(derive_seed(ts, 0))?, cfg.lambda)?;
                Ok((ops_sample_from(&sol, gamma, derive_seed(ts, 1))?.theta_tilde - &theta0).norm_squared())
            })
            .collect::<Result<_>>()?;
        let m = MeanEstimate::from_samples(&errs);
        let (printed, exact, cramer_rao) = predictions(&gram, &theta0, cfg.sigma_data, cfg.lambda, gamma)?;
        out.push(EfficiencyRow {
            mechanism: "ops",
            gamma,
            lambda: cfg.lambda,
            mse: m.mean,
            stderr: m.stderr,
            printed,
            exact,
            cramer_rao,
            lambda_zero_fraction: None,
        });
    }

    let kappa = cfg
        .kappa
        .unwrap_or_else(|| 0.5 * AdaOpsParams::kappa_bound(cfg.n, cfg.d, cfg.eps_budget, cfg.delta));
    let params = AdaOpsParams::new(cfg.n, cfg.d, cfg.eps_budget, cfg.delta, kappa)?;
    let seed = derive_seed(cfg.seed, 99);
    let trials: Vec<(f64, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let ts = derive_seed(seed, t as u64);
            let s = adaops(&design.draw(derive_seed(ts, 0))?, cfg.eps_budget, cfg.delta, kappa, derive_seed(ts, 1))?;
            let zero = s.diagnostics.is_some_and(|d| d.lambda_n == 0.0);
            Ok(((s.theta_tilde - &theta0).norm_squared(), zero))
        })
        .collect::<Result<_>>()?;
    let errs: Vec<f64> = trials.iter().map(|t| t.0).collect();
    let m = MeanEstimate::from_samples(&errs);
    let (printed, exact, cramer_rao) = predictions(&gram, &theta0, cfg.sigma_data, 0.0, params.gamma_n)?;
    out.push(EfficiencyRow {
        mechanism: "adaops",
        gamma: params.gamma_n,
        lambda: 0.0,
        mse: m.mean,
        stderr: m.stderr,
        printed,
        exact,
        cramer_rao,
        lambda_zero_fraction: Some(trials.iter().filter(|t| t.1).count() as f64 / trials.len() as f64),
    });

    let table = csv_table(
        &["mechanism", "gamma", "lambda", "mse", "stderr", "printed", "exact", "cramer_rao", "ratio_to_cr", "lambda_zero_fraction"],
        out.iter().map(|r| {
            let mut cells = vec![r.mechanism.to_string()];
            cells.extend([r.gamma, r.lambda, r.mse, r.stderr, r.printed, r.exact, r.cramer_rao, r.mse / r.cramer_rao].map(num));
            cells.push(r.lambda_zero_fraction.map_or_else(String::new, num));
            cells
        }),
    );
    Ok(EfficiencyResult { design: x, theta0, rows: out, files: vec![OutputFile { name: "efficiency.csv".into(), contents: table }] })
}
