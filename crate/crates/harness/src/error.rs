use std::path::PathBuf;

use cefl_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration, rejected before anything runs.
    #[error("invalid configuration: {0}")]
    Validation(String),
    /// A run stopped early on divergence or a non-finite aggregate.
    #[error("run aborted: {0}")]
    Abort(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    /// Process exit status: 1 validation, 2 runtime abort, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Abort(_) => 2,
            Self::Io { .. } | Self::Format { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn field(field: &str, err: impl std::fmt::Display) -> Self {
        Self::Validation(format!("{field}: {err}"))
    }
}

impl From<CoreError> for HarnessError {
    fn from(err: CoreError) -> Self {
        if cefl_core::engine::is_runtime_abort(&err) {
            Self::Abort(err.to_string())
        } else {
            Self::Validation(err.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
