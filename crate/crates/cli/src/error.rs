use thiserror::Error;

/// Failures grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration values (exit code 1).
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable or malformed input data (exit code 2).
    #[error("data error: {0}")]
    Data(String),
    /// Failure while computing or writing results (exit code 3).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
