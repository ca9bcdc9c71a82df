use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegnetError {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error(transparent)]
    Numerics(#[from] dat_numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, SegnetError>;
