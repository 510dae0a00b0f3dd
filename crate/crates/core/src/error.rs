//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("FFT length {len} is not a power of two")]
    FftLength { len: usize },

    #[error("dimension {dim} is not divisible by {divisor}")]
    NotDivisible { dim: usize, divisor: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("mask kind mismatch: {0}")]
    MaskKind(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("tensor file format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
