//! Desk-scale simulations and the verification suite behind the `pdp`
//! command-line tool. Every experiment is a deterministic function of its
//! [`ExperimentConfig`] and returns its CSV outputs in memory.

mod config;
mod efficiency;
mod fig1;
mod fig2;
mod optgap;
mod verify;

use std::fmt::Write as _;
use std::path::Path;

pub use config::ExperimentConfig;
pub use efficiency::{run_efficiency, EfficiencyResult, EfficiencyRow};
pub use fig1::{run_fig1, Fig1Result};
pub use fig2::{run_fig2, Fig2Result, Fig2Row};
pub use optgap::{run_optgap, OptGapResult, OptGapRow};
pub use verify::{ops_instance, run_verify, CheckResult, OpsInstance, VerifyReport};

use crate::data::{fmt_f64, generate_linear_gaussian, normalize_clip, Dataset, SyntheticConfig};
use crate::error::Result;
use crate::rng::derive_seed;

/// Synthetic data for `cfg` with unit-norm rows, and `|y| ≤ 1` when
/// `cfg.clip` is set.
pub fn synthetic_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let syn = SyntheticConfig::with_unit_theta(cfg.n, cfg.d, cfg.sigma_data, derive_seed(cfg.seed, 0));
    let ds = generate_linear_gaussian(&syn)?.0;
    if cfg.clip {
        return Ok(normalize_clip(&ds));
    }
    Ok(ds)
}

/// One named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Writes every file into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// Rows of `f64` cells to CSV text under a header.
pub(crate) fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub(crate) fn num(v: f64) -> String {
    fmt_f64(v)
}
