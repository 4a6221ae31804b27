use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-positive loss ({which} = {value})")]
    NonPositiveLoss { which: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("gram matrix is numerically singular (det = {det:e})")]
    SingularGram { det: f64 },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },

    #[error("checkpoint fingerprint mismatch: checkpoint {found}, problem {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
