use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("metric contract: {0}")]
    Metric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerics(#[from] dat_numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, StreamError>;
