use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    ConfigInvalid(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("unknown column(s) {missing:?}; available: {}", available.join(", "))]
    MissingColumn { missing: Vec<String>, available: Vec<String> },
    #[error("malformed diagnostics file {path}: {message}")]
    MalformedCsv { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid(_) | CliError::MissingColumn { .. } => 2,
            CliError::Io { .. } | CliError::Checkpoint { .. } | CliError::MalformedCsv { .. } => 1,
        }
    }
}
