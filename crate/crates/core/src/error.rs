use thiserror::Error;

/// Errors raised by the geostatistics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "optimizer did not converge after {evaluations} evaluations (best rss {best_rss:.6e})"
    )]
    Convergence {
        evaluations: usize,
        best_rss: f64,
        best: Box<crate::variogram::VariogramModel>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
