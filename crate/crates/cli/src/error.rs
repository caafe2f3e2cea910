use bell_lab::LabError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const MODEL: i32 = 3;
    pub const TABLE: i32 = 4;
    pub const TOO_LARGE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Lab(#[from] LabError),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::Lab(LabError::ContinuousLambdaUnorderable) => exit::TABLE,
            CliError::Lab(LabError::TooLarge { .. }) => exit::TOO_LARGE,
            CliError::Lab(_) => exit::MODEL,
        }
    }
}
