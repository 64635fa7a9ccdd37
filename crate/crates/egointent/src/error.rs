//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A structured-text document failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A container declared a format version this build does not read.
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// A binary artifact is truncated or fails its checksum.
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    /// A frame offered no detections to choose from.
    #[error("no candidate detections in frame")]
    NoCandidates,

    /// Evaluation inputs are missing entries for annotated images.
    #[error("missing predictions or frames for image ids: {}", missing.join(", "))]
    IncompleteInput { missing: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Exit status the CLI maps this error to: 1 for bad input, 2 for
    /// internal failures (divergence, corrupt artifacts, I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::UnsupportedVersion { .. }
            | Error::NoCandidates
            | Error::IncompleteInput { .. } => 1,
            Error::Diverged { .. } | Error::CorruptArtifact(_) | Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
