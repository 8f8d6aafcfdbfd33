use std::fmt;

use sbridge_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NonConvergence {
        iterations: usize,
        last_change: f64,
        detail: String,
    },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::NonConvergence {
                iterations,
                last_change,
                detail,
            } => write!(
                f,
                "no convergence after {iterations} iterations (last change {last_change:e}): {detail}"
            ),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence {
                iterations,
                last_change,
                detail,
            } => CliError::NonConvergence {
                iterations,
                last_change,
                detail,
            },
            Error::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
