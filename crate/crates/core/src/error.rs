use thiserror::Error;

use crate::kernels::KernelParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate sample set ({reason}); fallback {fallback:?}")]
    FitDegenerate { reason: String, fallback: KernelParams },

    #[error("{samples} samples cannot support {components} mixture components; reduce the component count")]
    TooFewSamples { samples: usize, components: usize },

    #[error("no matched pairs")]
    NoMatches,

    #[error("kernel bank has no entry for target `{target}` / source `{source_category}`")]
    MissingKernel { target: String, source_category: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("leakage: {method} read an event at t = {timestamp} at or after cutoff {cutoff}")]
    Leakage {
        method: String,
        timestamp: f64,
        cutoff: f64,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::Dimension(_) => ErrorKind::Validation,
            Error::FitDegenerate { .. } | Error::TooFewSamples { .. } | Error::NonFinite(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numerical,
}
