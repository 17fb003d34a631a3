//! Crate error type.

use thiserror::Error;

/// Unified error type for configuration, domain and runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraint.
    #[error("config error: field `{field}`: {msg}")]
    Config { field: String, msg: String },

    /// An argument is outside the operator's domain (e.g. z outside [0, h]).
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented operator precondition failed.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The time stepper detected a blow-up or CFL violation.
    #[error("instability at step {step}: {msg}")]
    Instability { step: usize, msg: String },

    /// Underlying I/O failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON input.
    #[error("json error: {0}")]
    Json(String),
}

impl Error {
    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), msg: msg.into() }
    }
}
