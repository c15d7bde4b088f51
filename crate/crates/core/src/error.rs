use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two transform vectors (or a vector and a basis) were produced by
    /// different transform configurations.
    #[error("transform configuration mismatch: expected fingerprint {expected:016x}, found {found:016x}")]
    ConfigMismatch { expected: u64, found: u64 },

    #[error("insufficient data for class `{class}`: {reason}")]
    InsufficientData { class: String, reason: String },

    #[error("model incomplete: no distance density for class `{0}`")]
    ModelIncomplete(String),

    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("deformed sample rejected: {0}")]
    SampleRejected(String),

    #[error("synthetic generation failed for template `{template}` after {attempts} redraws")]
    GenerationFailed { template: String, attempts: usize },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration (as opposed to
    /// failures while running a well-formed request).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::ConfigMismatch { .. } | Error::Format { .. }
        )
    }
}
