use std::path::{Path, PathBuf};

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Exit status for command-line usage problems and invalid configs.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for unreadable, unwritable or undecodable files.
pub const EXIT_IO: i32 = 2;
/// Exit status for corrupt artifacts and violated contracts.
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: cannot decode: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },
    #[error("{}: {reason}", path.display())]
    Integrity { path: PathBuf, reason: String },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] amsr_core::Error),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn integrity(path: &Path, reason: impl Into<String>) -> Self {
        AppError::Integrity {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AppError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config { .. } => EXIT_USAGE,
            AppError::Core(amsr_core::Error::Config { .. }) => EXIT_USAGE,
            AppError::Io { .. } | AppError::Decode { .. } => EXIT_IO,
            AppError::Integrity { .. } | AppError::Failed(_) | AppError::Core(_) => EXIT_INTEGRITY,
        }
    }
}
