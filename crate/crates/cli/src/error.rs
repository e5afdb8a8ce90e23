use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] fdrb_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 2 usage, 3 data, 4 infeasible.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_infeasible() => 4,
            CliError::Core(_) | CliError::Io(_) | CliError::Json(_) => 3,
        })
    }
}

/// Re-tags a core error raised while checking flag values as a usage error.
pub fn flag_error(e: fdrb_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}
