//! Scenario files, output formats and run orchestration for `atwflow-core`.

pub mod output;
pub mod runner;
pub mod scenario;
pub mod verify;

use std::fmt;

/// Failure classes, mapped to process exit codes by the binary.
#[derive(Debug, Clone, PartialEq)]
pub enum AppError {
    /// Bad scenario, arguments or files (exit 2).
    Input(String),
    /// The solver aborted (exit 3).
    Solver(String),
    /// A hard verification check failed (exit 4).
    Verification(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Input(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Verification(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Input(m) => write!(f, "input error: {m}"),
            AppError::Solver(m) => write!(f, "solver failure: {m}"),
            AppError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl std::error::Error for AppError {}
