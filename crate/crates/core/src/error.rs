//! Error taxonomy shared by the whole pipeline.
//!
//! Variants are grouped by failure class so callers (notably the CLI) can
//! map them to distinct exit codes: shape/contract/validation/config are
//! caller errors, io/format are file errors, numerical means a check failed.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SrxError>;

#[derive(Debug, Error)]
pub enum SrxError {
    /// Tensor extents do not line up; the message names both shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was called outside its contract (non-scalar loss,
    /// batch too small, zero vector where a direction is required, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Ingested data broke a structural rule; the message names the rule.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A binary or text artifact could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A numerical check failed (gradient mismatch, non-finite loss).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SrxError {
    pub fn shape(msg: impl Into<String>) -> Self {
        SrxError::Shape(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        SrxError::Contract(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        SrxError::Validation(msg.into())
    }

    pub fn format(offset: usize, msg: impl Into<String>) -> Self {
        SrxError::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        SrxError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        SrxError::Numerical(msg.into())
    }
}
