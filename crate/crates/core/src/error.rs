use thiserror::Error;

use crate::localpoly::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset has no observations")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no cell has at least {min_side_count} observations on both sides of the cutoff")]
    AllCellsDropped { min_side_count: usize },

    #[error(
        "cell `{cell}` has {available} usable observations on the {side} side; an order-{order} fit needs {needed}"
    )]
    InsufficientSupport { cell: String, side: Side, order: usize, available: usize, needed: usize },

    #[error("weighted design for cell `{cell}` on the {side} side is singular (condition number {condition:.3e})")]
    SingularDesign { cell: String, side: Side, condition: f64 },

    #[error("moment matrix on the {side} side is not invertible")]
    SingularGamma { side: Side },

    #[error("estimated first stage is zero")]
    ZeroFirstStage,

    #[error("cell {index} has first-stage discontinuity {delta_x:.3e}, too close to zero for this estimand")]
    WeakCell { index: usize, delta_x: f64 },

    #[error("instrument and first stage have opposite signs in cell {index}")]
    SignViolation { index: usize },

    #[error("weighting denominator is not positive")]
    DegenerateDenominator,

    #[error("first-stage discontinuity in cell {index} is negative")]
    NegativeCompliance { index: usize },

    #[error("robust variance is not positive ({value:.3e}); the data are fit exactly")]
    NonPositiveVariance { value: f64 },

    #[error("running variable has zero spread")]
    DegenerateSample,
}
