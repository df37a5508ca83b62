use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SisError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("non-manifold edge ({0}, {1})")]
    NonManifoldEdge(usize, usize),

    #[error("non-manifold vertex {0}")]
    NonManifoldVertex(usize),

    #[error("not genus-0: Euler characteristic {euler} (expected 2)")]
    NotGenus0 { euler: i64 },

    #[error("zero variance")]
    ZeroVariance,

    #[error("point is not on the unit sphere (norm {0})")]
    NotUnit(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolveFailed { iterations: usize, residual: f64 },

    #[error("{count} flipped triangles remain after correction")]
    FlippedTriangles { count: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stale activation cache")]
    StaleCache,

    #[error("model has not been trained")]
    Untrained,

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    Diverged {
        epoch: usize,
        last_finite: Option<usize>,
    },

    #[error("bad magic")]
    BadMagic,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SisError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SisError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        SisError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end: 3 for numerical
    /// failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SisError::SolveFailed { .. }
            | SisError::FlippedTriangles { .. }
            | SisError::NonFiniteGradient(_)
            | SisError::Diverged { .. }
            | SisError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = SisError> = std::result::Result<T, E>;
