//! Per-instance differential privacy (pDP) accounting for output
//! perturbation, posterior sampling (OPS), objective perturbation and
//! AdaOPS on linear and ridge regression, plus smooth ERM sensitivity,
//! Monte-Carlo hockey-stick verification and generalization bounds.
//!
//! The crate is organized bottom-up:
//!
//! * [`data`] holds data sets, synthetic generation and CSV I/O.
//! * [`ridge`] solves ridge regression and exposes leverage scores and
//!   rank-one updates.
//! * [`mechanisms`] implements the randomized releases.
//! * [`accounting`] computes privacy losses for every mechanism and
//!   certifies them by Monte Carlo.
//! * [`generalization`] evaluates the moment-pDP generalization bounds.
//! * [`experiments`] drives desk-scale simulations and the verification
//!   suite used by the `pdp` command-line tool.

// `!(x > 0.0)` style guards are used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod data;
pub mod error;
pub mod experiments;
pub mod generalization;
pub mod mechanisms;
pub mod ridge;
pub mod rng;
pub mod stats;

pub use accounting::{
    compose_advanced, compose_simple, gaussian_delta_exact, gaussian_pdp, group_privacy,
    ops_dp_agnostic, ops_pdp_agnostic, ops_pdp_bound, pdp_dataset_report, pdp_for_all,
    sensitivity_linreg, verify_pdp_mc, McVerdict, OpsBound, PdpBudget, PdpDatasetReport,
    PdpPointReport,
};
pub use data::{DataPoint, Dataset, Direction, SyntheticConfig};
pub use error::{Error, Result};
pub use mechanisms::{MechanismKind, MechanismSample, MechanismSpec, NoiseDesign};
pub use ridge::{LeveragePair, RidgeSolution};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
