use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input or parameter violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// Problem too large for an exhaustive routine.
    #[error("size error: {0}")]
    Size(String),
    /// Experiment or generator configuration cannot be realized.
    #[error("configuration error: {0}")]
    Config(String),
    /// A computation produced a value that should be impossible under valid inputs.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(validation(format!("{name} must be finite, got {x}")))
    }
}
