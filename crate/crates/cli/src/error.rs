use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `key` names the offending configuration entry.
    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error(transparent)]
    Core(#[from] ensemble_calib::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), line, message: message.into() }
    }

    /// Process exit code: 3 config, 4 I/O, 5 shape, 6 parse, 1 anything else.
    /// (2 is left to argument-parsing errors.)
    pub fn exit_code(&self) -> i32 {
        use ensemble_calib::Error as Core;
        match self {
            CliError::Config { .. } | CliError::Core(Core::Config(_)) => 3,
            CliError::Io { .. } => 4,
            CliError::Shape(_) | CliError::Core(Core::Shape(_)) => 5,
            CliError::Parse { .. } => 6,
            CliError::Core(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
