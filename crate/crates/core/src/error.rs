//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum SaiiError {
    /// Array shapes or sizes are incompatible.
    Dimension(String),
    /// A configuration value is outside its valid range.
    Parameter(String),
    /// Input values violate a mathematical precondition (e.g. non-positive impedance).
    Domain(String),
    /// Training or optimization produced non-finite values.
    Numerical(String),
    /// A serialized artifact is malformed or has the wrong format version.
    Format(String),
    /// Checkpoints are inconsistent with each other (hash mismatch, shape mismatch).
    Checkpoint(String),
    Io(std::io::Error),
}

impl fmt::Display for SaiiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SaiiError::Dimension(msg) => write!(f, "dimension error: {msg}"),
            SaiiError::Parameter(msg) => write!(f, "parameter error: {msg}"),
            SaiiError::Domain(msg) => write!(f, "domain error: {msg}"),
            SaiiError::Numerical(msg) => write!(f, "numerical error: {msg}"),
            SaiiError::Format(msg) => write!(f, "format error: {msg}"),
            SaiiError::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            SaiiError::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for SaiiError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SaiiError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for SaiiError {
    fn from(err: std::io::Error) -> Self {
        SaiiError::Io(err)
    }
}

impl From<serde_json::Error> for SaiiError {
    fn from(err: serde_json::Error) -> Self {
        SaiiError::Format(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SaiiError>;
