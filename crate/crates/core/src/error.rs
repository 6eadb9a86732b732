//! Crate-wide error type. Every variant belongs to a category that maps
//! onto a stable process exit code in the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid compression ratio: {0}")]
    Ratio(String),

    #[error("wire format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("truncated message: need {needed} more bytes")]
    Truncated { needed: usize },

    #[error("unsupported wire version {0}")]
    Version(u8),

    #[error("message body too large: {0} bytes")]
    Size(u64),

    #[error("unknown node {0}")]
    Routing(u32),

    #[error("clock sync timed out: {0}")]
    SyncTimeout(String),

    #[error("latency measurement failed: {0}")]
    Measurement(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error class used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Wire,
    Geometry,
    Network,
    Measurement,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Wire => 4,
            ErrorCategory::Geometry => 5,
            ErrorCategory::Network => 6,
            ErrorCategory::Measurement => 7,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Io(_) => ErrorCategory::Io,
            Error::Format(_)
            | Error::Protocol(_)
            | Error::Truncated { .. }
            | Error::Version(_)
            | Error::Size(_)
            | Error::Ratio(_) => ErrorCategory::Wire,
            Error::InvalidPose(_) | Error::FrameMismatch(_) | Error::Shape(_) => {
                ErrorCategory::Geometry
            }
            Error::Routing(_) => ErrorCategory::Network,
            Error::SyncTimeout(_) | Error::Measurement(_) => ErrorCategory::Measurement,
        }
    }
}
