use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("malformed NPY data: {0}")]
    Npy(String),

    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("optimization diverged at step {step}")]
    Divergence { step: usize },

    #[error("zero total variance")]
    ZeroVariance,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Errors caused by bad inputs or options rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Shape(_)
                | Error::Npy(_)
                | Error::UnsupportedDtype(_)
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
