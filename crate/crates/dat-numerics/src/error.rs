use thiserror::Error;

/// Errors raised by tensor construction, kernels, and the tape.
#[derive(Debug, Error)]
pub enum NumericsError {
    /// Shapes of the operands do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A scalar parameter is outside its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation produced or consumed a NaN/Inf where finiteness is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A caller violated an API contract (lengths, node kinds, ...).
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
