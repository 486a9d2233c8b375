use std::path::PathBuf;

/// Errors raised by the modelling and prediction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model was evaluated outside of its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value violates a documented invariant of a configuration or data type.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Input data does not cover the interval an operation needs.
    #[error("coverage gap: {0}")]
    Coverage(String),

    /// Too few samples for the requested fit.
    #[error("insufficient data: need at least {needed}, got {got} ({what})")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    /// A numerical procedure failed (singular system, every scenario rejected, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Returns true for errors caused by bad configuration or input values.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Coverage(_) | Error::InsufficientData { .. }
        )
    }

    /// Returns true for filesystem and parsing errors.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invalid(msg()))
    }
}
