//! Privacy-loss accounting: per-instance sensitivities, pDP and DP bounds
//! for the Gaussian and OPS mechanisms, composition, data-set reports,
//! smooth ERM sensitivities and a Monte-Carlo hockey-stick verifier.

mod composition;
mod gaussian;
mod montecarlo;
mod ops;
mod report;
mod sensitivity;
pub mod smooth;

pub use composition::{compose_advanced, compose_simple, group_privacy, PdpBudget};
pub use gaussian::{gaussian_delta_exact, gaussian_eps_exact, gaussian_pdp};
pub use montecarlo::{verify_pdp_mc, verify_pdp_mc_multi, GaussianLaw, McVerdict};
pub use ops::{
    ops_dp_agnostic, ops_pdp_agnostic, ops_pdp_bound, ops_pdp_bound_in_sample, ops_pdp_from_leverage, ops_pdp_two_sided, OpsBound,
};
pub use report::{
    gaussian_dp_worst_case, pdp_dataset_report, pdp_for_all, BoundUsed, PdpDatasetReport, PdpForAll, PdpPointReport,
    PointIndex,
};
pub use sensitivity::{a_norm, sensitivity_linreg, sensitivity_linreg_in_sample};
pub use smooth::{
    gauss_legendre, sensitivity_smooth_exact, sensitivity_smooth_quasinewton, L2Regularizer, LogisticLoss,
    PointLoss, Regularizer, SmoothProblem, SquaredLoss,
};
