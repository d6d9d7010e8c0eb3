use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A numerical failure during a run; `context` names the failing piece,
    /// e.g. `scheme em, h = 0.0625`.
    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: mhsde::Error,
    },

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn runtime(context: impl Into<String>, source: mhsde::Error) -> Self {
        CliError::Runtime { context: context.into(), source }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
