//! Batch commands and the label review service.

pub mod cli;
pub mod commands;
pub mod service;

use serde::Serialize;

pub use ringtower_core::{Error, Result};

/// Exit status for a failed command: 2 for bad input, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        2
    } else {
        1
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl From<&Error> for ErrorReport {
    fn from(err: &Error) -> Self {
        Self {
            kind: err.kind(),
            message: err.to_string(),
            index: err.index(),
        }
    }
}

/// One-line JSON written to stderr on failure.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({ "error": ErrorReport::from(err) }).to_string()
}
