//! Error type shared by all numerical layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Metric (or Gram matrix) failed its Cholesky factorization.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    /// Input vectors are numerically dependent (Gram condition too large).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Constraint rows lost rank at the evaluation point.
    #[error("constraint rank drop at evaluation point: {0}")]
    RankDrop(String),

    /// A field expected to be a section of the distribution is not.
    #[error("vector field does not lie in the distribution: {0}")]
    NotInDistribution(String),

    /// A reduced quantity depended on the group coordinates.
    #[error("quantity is not invariant under the group action: {0}")]
    NotInvariant(String),

    /// dβ estimates at resolutions k and 2k disagree too much.
    #[error("grid too coarse for a stable verdict: {0}")]
    GridTooCoarse(String),

    /// Shape point in the snakeboard's ε-degenerate set.
    #[error("singular shape configuration: {0}")]
    SingularShape(String),

    /// State left the floating-point range at grid step `step`.
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
