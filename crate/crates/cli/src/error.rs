//! CLI error type carrying the process exit code: 2 for usage/config
//! problems, 1 for runtime failures.

use std::fmt;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError {
            message: msg.into(),
            exit_code: 2,
        }
    }

    pub fn runtime(msg: impl Into<String>) -> CliError {
        CliError {
            message: msg.into(),
            exit_code: 1,
        }
    }

    pub fn usage_from(e: impl fmt::Display) -> CliError {
        CliError::usage(e.to_string())
    }

    pub fn runtime_from(e: impl fmt::Display) -> CliError {
        CliError::runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<hymos_core::Error> for CliError {
    fn from(e: hymos_core::Error) -> CliError {
        use hymos_core::Error::*;
        match e {
            InvalidConfig(_) | TooFewClasses(_) | SingleClass => CliError::usage(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::runtime(e.to_string())
    }
}
