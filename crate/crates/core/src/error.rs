use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("invalid expression: {0}")]
    InvalidExpression(String),

    #[error("input-gradient nesting deeper than one level is not supported")]
    NestingTooDeep,

    #[error("tape has no single scalar output")]
    NoScalarOutput,

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("non-finite HJB residual {value} at sample {index}")]
    NonFiniteResidual { index: usize, value: f64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("Riccati solver did not converge after {iterations} iterations (residual {residual:e})")]
    RiccatiNonConvergence { iterations: usize, residual: f64 },

    #[error("invalid LQR problem: {0}")]
    InvalidProblem(String),

    #[error("episode index {got} is not after {last}")]
    OutOfOrderEpisode { last: u64, got: u64 },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

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

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
