use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: quaternion norm {norm} is not 1")]
    InvalidRotation { norm: f64 },
    #[error("invalid scale: all components must be positive, got {0:?}")]
    InvalidScale([f64; 3]),
    #[error("cannot normalize a zero quaternion")]
    ZeroQuaternion,
    #[error("covariance is singular")]
    SingularCovariance,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint incompatible: {0}")]
    CheckpointIncompatible(String),

    #[error("cannot build an index over zero points")]
    EmptyIndex,
    #[error("requested {requested} neighbors but only {available} points are indexed")]
    InsufficientPoints { requested: usize, available: usize },
    #[error("need at least {required} ground-truth primitives, got {available}")]
    InsufficientGroundTruth { required: usize, available: usize },
    #[error("need at least {required} input points, got {available}")]
    InsufficientInput { required: usize, available: usize },

    #[error("expected {expected} neighbors, got {actual}")]
    Arity { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    /// Name of the pipeline stage an error originates from, for CLI messages.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidRotation { .. }
            | Error::InvalidScale(_)
            | Error::ZeroQuaternion
            | Error::SingularCovariance
            | Error::InvalidCamera(_) => "core",
            Error::Parse { .. } | Error::Schema(_) | Error::Io { .. } | Error::CheckpointIncompatible(_) => "io",
            Error::EmptyIndex
            | Error::InsufficientPoints { .. }
            | Error::InsufficientGroundTruth { .. }
            | Error::InsufficientInput { .. } => "spatial",
            Error::Arity { .. } | Error::NonFinite(_) => "net",
            Error::Divergence { .. } => "train",
            Error::Shape(_) => "render",
            Error::Config(_) => "config",
        }
    }
}
