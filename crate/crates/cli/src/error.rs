use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Origin;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{at}: {msg}")]
    Config { at: String, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] stalesync_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(origin: &Origin, msg: impl Into<String>) -> Self {
        CliError::Config { at: origin.to_string(), msg: msg.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}
