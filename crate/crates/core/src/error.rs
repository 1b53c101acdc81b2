use thiserror::Error;

/// Errors raised by field evaluation, path generation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A field returned a non-finite component at a finite input.
    ///
    /// `overflow` is set when every offending component is infinite (no NaN),
    /// which the solvers treat as an explosion rather than a hard failure.
    #[error("non-finite field value at {point:?}")]
    Domain { point: Vec<f64>, overflow: bool },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("dyadic level {level} out of range (max {max})")]
    LevelOutOfRange { level: u32, max: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown inequality `{0}`")]
    UnknownInequality(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
