//! Support code for the `stateprompt` command-line tool.

pub mod embedder;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stateprompt::Error),

    #[error("embedder: {0}")]
    Transport(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for transport failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Transport(_) => 2,
            CliError::Core(_) | CliError::Usage(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
