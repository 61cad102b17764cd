//! Process-level error classification. Every failure path maps onto one of
//! the documented exit codes, so scripts can branch on the outcome.

use std::fmt;

#[derive(Debug)]
pub enum AppError {
    /// Unusable configuration: parse failure, schema violation, missing or
    /// contradictory fields, bad sweep ranges. Exit code 2.
    Config(String),
    /// A single-run task hit a divergence or an unstable working point.
    /// Exit code 3.
    Unstable(String),
    /// A multi-point task finished, but some points failed. Exit code 4.
    Partial { failed: usize, total: usize },
    /// IO or internal failure. Exit code 1.
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Unstable(_) => 3,
            AppError::Partial { .. } => 4,
            AppError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "configuration error: {msg}"),
            AppError::Unstable(msg) => write!(f, "{msg}"),
            AppError::Partial { failed, total } => {
                write!(f, "{failed} of {total} points failed; see the inline error column")
            }
            AppError::Internal(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Internal(format!("io error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
