use thiserror::Error;

/// Errors raised by the measurement-model operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AkError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("singular configuration: {0}")]
    SingularTime(String),

    #[error("singular quadratic form: {0}")]
    SingularQuadraticForm(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, AkError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AkError {
    AkError::InvalidParameters(msg.into())
}
