use std::path::PathBuf;

use thiserror::Error;

/// Failures of the command-line layer, grouped by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Training(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] frelic_core::Error),
}

impl AppError {
    pub fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Data {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 usage, 3 data, 4 model/stream mismatch.
    pub fn exit_code(&self) -> i32 {
        use frelic_core::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::Mismatch(_) | Self::Core(E::ModelMismatch { .. }) => 4,
            Self::Core(E::Config(_)) => 2,
            Self::Data { .. } | Self::Io { .. } | Self::Training(_) | Self::Core(_) => 3,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
