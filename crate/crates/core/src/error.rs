use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read repository root {path}: {source}")]
    RepoRoot {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid exclude pattern `{pattern}`: {message}")]
    ExcludePattern { pattern: String, message: String },

    #[error("{path}:{line}: {message}")]
    KbFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    JsonLines {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn provider(provider: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Provider {
            provider: provider.into(),
            message: message.into(),
        }
    }
}
