use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Core(#[from] vsrl_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Whether the error comes from the user's input rather than a run.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Io { .. } | Self::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
