use std::path::Path;

use ggd_core::GgdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] GgdError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for configuration and input mismatches, 3 for unreadable or
    /// malformed files, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                GgdError::Io(_) | GgdError::Parse { .. } | GgdError::Format(_) => 3,
                GgdError::NonFinite { .. } | GgdError::Normalization(_) => 4,
                _ => 2,
            },
        }
    }
}
