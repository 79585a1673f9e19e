use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or a dataset the command cannot run on.
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: u64, msg: String },

    #[error(transparent)]
    Core(#[from] icon_core::Error),

    #[error("{failed} of {total} folds failed; the report covers the remaining folds")]
    FoldsFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(file: &Path, line: u64, msg: impl Into<String>) -> Self {
        CliError::Parse { file: file.to_path_buf(), line, msg: msg.into() }
    }

    /// Process exit status: 2 for usage and configuration problems, 1 for
    /// everything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(icon_core::Error::NotEnoughSessions { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
