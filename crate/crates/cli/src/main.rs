//! `pdp`: experiments, per-point privacy reports and the verification
//! suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pdp_core::data::load_csv;
use pdp_core::experiments::{
    run_efficiency, run_fig1, run_fig2, run_optgap, run_verify, synthetic_data, write_outputs, ExperimentConfig,
    OutputFile,
};
use pdp_core::{pdp_dataset_report, MechanismKind};

#[derive(Parser, Debug)]
#[command(name = "pdp", version, about = "Per-instance differential privacy for ridge regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Output perturbation: worst-case DP against per-row pDP.
    Fig1(Common),
    /// γ sweeps of the isotropic Gaussian mechanism and OPS.
    Fig2(Common),
    /// Mean squared error of OPS and AdaOPS against closed forms.
    Efficiency(Common),
    /// Optimization error of OPS.
    Optgap(Common),
    /// Runs the invariant and Monte-Carlo certification suite.
    Verify(Common),
    /// Per-row pDP report for a CSV data set, or for synthetic data.
    Report {
        #[command(flatten)]
        common: Common,
        /// Data set with columns x1..xd,y.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Writes a row-normalized synthetic data set.
    Generate(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated γ sweep.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise standard deviation of the mechanism.
    #[arg(long)]
    sigma: Option<f64>,
    /// Noise level of the synthetic responses.
    #[arg(long)]
    sigma_data: Option<f64>,
    #[arg(long)]
    eps_budget: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    mechanism: Option<MechanismKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    moments: Option<usize>,
    #[arg(long)]
    search_budget: Option<usize>,
    /// Clip synthetic responses to [-1, 1].
    #[arg(long)]
    clip: Option<bool>,
}

impl Common {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { cfg.$target = v.clone(); })*
            };
        }
        apply!(
            seed => seed, delta => delta, gamma => gamma, lambda => lambda, sigma => sigma_mech,
            sigma_data => sigma_data, eps_budget => eps_budget, mechanism => mechanism, out => out,
            n => n, d => d, trials => trials, mc_samples => mc_samples, moments => moments,
            search_budget => search_budget, clip => clip,
        );
        if self.gammas.is_some() {
            cfg.gammas = self.gammas.clone();
        }
        if self.kappa.is_some() {
            cfg.kappa = self.kappa;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Outcome {
    Ok,
    InvariantFailure,
}

fn emit(out: &Path, files: &[OutputFile]) -> anyhow::Result<()> {
    write_outputs(out, files).with_context(|| format!("writing to {}", out.display()))?;
    for f in files {
        println!("wrote {}", out.join(&f.name).display());
    }
    Ok(())
}

fn all_finite(eps: impl IntoIterator<Item = f64>) -> bool {
    eps.into_iter().all(|e| e.is_finite() && e >= 0.0)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut ok = true;
    match cli.command {
        Command::Fig1(c) => {
            let cfg = c.config()?;
            let r = run_fig1(&cfg)?;
            println!("{}", r.summary());
            ok &= all_finite(r.report.eps_values()) && r.report.quantiles.median * 10.0 <= r.dp_eps;
            emit(&cfg.out, &r.files)?;
        }
        Command::Fig2(c) => {
            let cfg = c.config()?;
            let r = run_fig2(&cfg)?;
            for row in &r.rows {
                println!(
                    "pane={} gamma={:e} dp_eps={:.6e} pdp_median={:.6e} excess_risk={:.6e}",
                    row.pane, row.gamma, row.dp_eps, row.pdp.median, row.excess_risk
                );
                ok &= all_finite([row.dp_eps, row.pdp.min, row.pdp.max]);
                if row.pane == "ops" {
                    ok &= row.pdp.median * 10.0 <= row.dp_eps;
                }
            }
            emit(&cfg.out, &r.files)?;
        }
        Command::Efficiency(c) => {
            let cfg = c.config()?;
            let r = run_efficiency(&cfg)?;
            for row in &r.rows {
                println!(
                    "mechanism={} gamma={:e} mse={:.6e} stderr={:.3e} exact={:.6e} printed={:.6e} cramer_rao={:.6e}",
                    row.mechanism, row.gamma, row.mse, row.stderr, row.exact, row.printed, row.cramer_rao
                );
            }
            emit(&cfg.out, &r.files)?;
        }
        Command::Optgap(c) => {
            let cfg = c.config()?;
            let r = run_optgap(&cfg)?;
            for row in &r.rows {
                println!(
                    "gamma={:e} mean_gap={:.6e} stderr={:.3e} d_over_gamma={:.6e} d_over_2gamma={:.6e} hp_fraction={:.4}",
                    row.gamma, row.mean_gap, row.stderr, row.d_over_gamma, row.d_over_two_gamma, row.hp_fraction
                );
            }
            emit(&cfg.out, &r.files)?;
        }
        Command::Verify(c) => {
            let cfg = c.config()?;
            let r = run_verify(&cfg)?;
            print!("{}", r.summary());
            ok &= r.all_passed();
            emit(&cfg.out, &r.files)?;
        }
        Command::Report { common, input } => {
            let cfg = common.config()?;
            let ds = match &input {
                Some(p) => load_csv(p).with_context(|| format!("reading {}", p.display()))?,
                None => synthetic_data(&cfg)?,
            };
            let rep = pdp_dataset_report(&ds, &cfg.mechanism_spec(ds.n(), ds.d()), cfg.delta, cfg.moments)?;
            let q = &rep.quantiles;
            println!(
                "mechanism={} n={} delta={:e} pdp_median={:.6e} pdp_max={:.6e} moment1={:.6e}",
                cfg.mechanism,
                ds.n(),
                cfg.delta,
                q.median,
                q.max,
                rep.moments[0]
            );
            ok &= all_finite(rep.eps_values());
            emit(&cfg.out, &[OutputFile { name: "report.csv".into(), contents: rep.to_csv_string() }])?;
        }
        Command::Generate(c) => {
            let cfg = c.config()?;
            let ds = synthetic_data(&cfg)?;
            emit(&cfg.out, &[OutputFile { name: "data.csv".into(), contents: ds.to_csv_string() }])?;
        }
    }
    Ok(if ok { Outcome::Ok } else { Outcome::InvariantFailure })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<pdp_core::Error>() {
            return match e {
                pdp_core::Error::Io(_) => 3,
                pdp_core::Error::Parameter(_)
                | pdp_core::Error::Parse { .. }
                | pdp_core::Error::Dimension { .. }
                | pdp_core::Error::Unsupported(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::InvariantFailure) => {
            eprintln!("error: invariant check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
