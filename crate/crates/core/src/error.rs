use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("non-finite value at iteration {iter}: {what}")]
    NonFinite { iter: usize, what: String },
    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("observation {0} is not a reproduction value of the quantizer")]
    NotInAlphabet(f64),
    #[error("operator checksum mismatch: {0}")]
    Checksum(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParam(msg.into()))
}
