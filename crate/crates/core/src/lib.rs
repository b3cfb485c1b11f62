//! Compliance-weighted and general weighted LATE estimation for fuzzy
//! regression discontinuity designs with a discrete covariate.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod localpoly;
pub mod normal;
pub mod policy;
pub mod simulation;

pub use bandwidth::{
    bias_bandwidth, main_bandwidth, pilot_bandwidth, select_bandwidths, BandwidthOptions, BandwidthReport,
};
pub use data::{build_partition, CellPartition, Kernel, RddDataset};
pub use error::{Error, Result};
pub use estimators::{
    conditional_lates, cwlate, selection_on_gains_sign, unconditional_wald, wlate, EstimandSpec, GainsSign, WlateResult,
};
pub use inference::{
    bias_estimate, estimate, linearization_coeffs, rbc_estimate, rbc_variance, EstimateOptions, EstimateReport,
    LinearizationCoeffs, RbcEstimate,
};
pub use localpoly::{
    bias_constants, cell_discontinuities, fit_side, fit_side_stacked, moment_matrices, residual_psi, BiasConstants,
    CellDiscontinuities, MomentMatrices, PsiSpec, Side, SideFit, Variable,
};
pub use policy::{policy_effects, policy_from_instrument, weights_from_instrument, PolicyEffects, PolicySpec};
pub use simulation::{
    dgp_sample, run_monte_carlo, true_estimands, BandwidthMode, McConfig, McReport, McRow, Target, TrueEstimands,
};
