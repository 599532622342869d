use std::path::PathBuf;

use aml_core::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aml_core::Error),

    #[error("{0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// Checks ran to completion and at least one failed.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => ErrorKind::Config,
            CliError::Write { .. } | CliError::Parse { .. } => ErrorKind::Data,
            CliError::CheckFailed(_) => ErrorKind::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self.kind() {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }
}
