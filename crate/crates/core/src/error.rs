use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    /// Every trial step of the line search left the positive-definite cone.
    #[error("line search failed at Newton iteration {iteration}: no positive-definite step")]
    LineSearch { iteration: usize },

    /// The diagonal of the iterate diverged; the penalized objective has no minimizer.
    #[error("objective appears unbounded below: diagonal entry {index} diverged to {value:e}")]
    Unbounded { index: usize, value: f64 },

    #[error("[Cx]_{index} is exactly zero; the l-inf expansion is undefined at this point")]
    ZeroComponent { index: usize },

    #[error("exact l-inf oracle refuses dimension {d}: vertex enumeration is capped at d = {max}")]
    DimensionGuard { d: usize, max: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
