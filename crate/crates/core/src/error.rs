use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    Numeric { op: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("parse error at row {row}, column `{column}`: {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("preprocessing error: column `{column}` {detail}")]
    Preprocess { column: String, detail: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("undefined metric {metric}: {reason}")]
    Undefined {
        metric: &'static str,
        reason: &'static str,
    },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        /// Parameters from the best epoch before the divergence.
        last_good: Box<crate::model::SddGat>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config(_)
            | Error::Geometry(_)
            | Error::Schema { .. }
            | Error::Parse { .. }
            | Error::Preprocess { .. }
            | Error::Split(_)
            | Error::Dimension { .. }
            | Error::Checkpoint(_) => 3,
            Error::Numeric { .. } | Error::Undefined { .. } | Error::Diverged { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
