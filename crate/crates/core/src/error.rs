//! Error type shared by all modules.

use alloc::string::String;

/// Errors surfaced by the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operands disagree on shape or size.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// An argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Input lies outside a function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The conditioning variant is not supported by this field.
    #[error("unsupported condition: {0}")]
    UnsupportedCondition(String),
    /// A configuration value is inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// An ODE state went non-finite.
    #[error("diverged at step {step}")]
    Divergence { step: usize },
    /// A gradient went non-finite during training.
    #[error("training diverged at step {step}")]
    TrainingDiverged { step: u64 },
    /// A trajectory has no usable chord.
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),
}

pub type Result<T> = core::result::Result<T, Error>;
