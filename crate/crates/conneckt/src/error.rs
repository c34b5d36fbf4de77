use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants map 1:1 onto the CLI exit codes
/// documented in `conneckt --help`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural problem in an input file (ragged rows, bad tokens, ...).
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: index {index} out of range [1, {max}]")]
    IndexRange {
        path: PathBuf,
        line: usize,
        index: usize,
        max: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A stage was fed data that violates its contract (e.g. negative
    /// values reaching the magnitude-smoothing stage).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Neuron with zero variance (or zero precision diagonal) after
    /// filtering; association scores are undefined for it.
    #[error("neuron {neuron} is degenerate after filtering (constant signal); \
             consider a lower threshold or --ridge")]
    Degenerate { neuron: usize },

    /// Covariance factorization failed.
    #[error("covariance matrix is singular or indefinite ({0}); \
             use the PCA-truncated inverse (--pca) or add --ridge")]
    IllConditioned(String),

    /// Evaluation needs at least one positive and one negative pair.
    #[error("degenerate label set: evaluation needs at least one edge and one non-edge")]
    DegenerateLabels,

    /// Failure at one point of the ensemble grid, annotated with the
    /// (filter, tau) pair that produced it.
    #[error("grid point ({filter}, tau={tau}): {source}")]
    GridPoint {
        filter: String,
        tau: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
