use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("column `{0}` has zero standard deviation on the training split")]
    DegenerateColumn(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("treatment-effect floor must be positive, got {0}")]
    NonPositiveFloor(f64),

    #[error("concept Gram matrix is rank deficient (singular value ratio {ratio:.3e})")]
    SingularConceptGram { ratio: f64 },

    #[error("penalized normal equations are singular; use lambda > 0 or drop collinear columns")]
    SingularSystem,

    #[error("loss diverged (non-finite) at epoch {epoch}")]
    DivergenceDetected { epoch: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("soft-threshold level must be non-negative, got {0}")]
    NegativeThreshold(f64),

    #[error("delta_c must be non-zero to parameterize the zero-loss manifold")]
    ZeroDeltaC,

    #[error("EYE condition is singular at delta_u = 1")]
    EyeSingularDeltaU,

    #[error("causal condition requires (lambda_c, lambda_u, lambda_s)")]
    MissingCausalLambdas,

    #[error("oracle grid is empty or degenerate: {0}")]
    EmptyGrid(String),

    #[error("feature index {index} out of range for row of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("inconsistent parameter dimensions across the list")]
    InconsistentDims,

    #[error("invalid network dimensions: {0}")]
    InvalidDims(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
