use thiserror::Error;

/// Errors raised by the library. Variants are grouped loosely by the
/// module that produces them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("degenerate Bernoulli distribution (p = {0})")]
    DegenerateDistribution(f64),
    #[error("negative jump weight {0}")]
    NegativeWeight(f64),
    #[error("cannot place {agents} agents on a grid of {cells} cells")]
    Placement { agents: usize, cells: usize },
    #[error("parameter {name} = {value} leaves the support after a step of {step}")]
    SupportViolation { name: String, value: f64, step: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.into(),
        reason: reason.into(),
    }
}
