use std::fmt;

/// Failure of a subcommand. The variant fixes the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed inputs: exit 2.
    Validation(String),
    /// Backend unreachable, missing secrets, unwritable outputs: exit 3.
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    pub fn backend(msg: impl fmt::Display) -> Self {
        CliError::Backend(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Backend(m) => write!(f, "backend error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
