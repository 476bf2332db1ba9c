use std::path::PathBuf;

use nnd::NndError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] NndError),
    /// A statistical check ran to completion and failed.
    #[error("check failed: {0}")]
    Failed(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 success, 1 numeric or statistical failure, 2 usage or IO error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Usage(_) => 2,
            CliError::Library(NndError::Argument(_) | NndError::Config(_)) => 2,
            CliError::Library(_) | CliError::Failed(_) | CliError::Internal(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
