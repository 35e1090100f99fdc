//! Shared fixtures for the benchmarks in `benches/`.

use pdp_core::data::{generate_linear_gaussian, normalize_clip};
use pdp_core::{Dataset, SyntheticConfig};

/// Row-normalized synthetic regression data.
pub fn fixture(n: usize, d: usize, seed: u64) -> Dataset {
    let cfg = SyntheticConfig::with_unit_theta(n, d, 0.2, seed);
    normalize_clip(&generate_linear_gaussian(&cfg).expect("valid config").0)
}
