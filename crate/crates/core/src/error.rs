use thiserror::Error;

/// Errors raised across the sampling, estimation and screening pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("evaluation failed at row {row}: {message}")]
    Evaluation { row: usize, message: String },

    #[error("degenerate kernel: {0}")]
    Kernel(String),

    #[error("invalid weights: {0}")]
    Weight(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the user's declarations rather than by numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parameter(_) | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
