use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports.
///
/// Variants name the failure category; the payload carries a human-readable
/// location (file, line, byte offset, row/column) where one exists.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("data error at {location}: {message}")]
    Data { location: String, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("refusing to overwrite {0} (pass the overwrite flag)")]
    Refusal(PathBuf),
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a context string, e.g. experiment and layer.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by how the tool was invoked (bad config,
    /// missing config file, existing outputs without the overwrite flag)
    /// rather than by the data it was pointed at.
    pub fn is_usage(&self) -> bool {
        matches!(self.root(), Error::Config(_) | Error::Refusal(_))
    }
}

/// A non-fatal condition surfaced to the caller and logged.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    DuplicateKey { key: String, line: usize },
    SampleShortage { requested: usize, available: usize },
    Underdetermined { n: usize, d1: usize, d2: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::DuplicateKey { key, line } => {
                write!(f, "duplicate key {key:?} at line {line}; last occurrence wins")
            }
            Warning::SampleShortage { requested, available } => write!(
                f,
                "requested {requested} records but only {available} available; taking all"
            ),
            Warning::Underdetermined { n, d1, d2 } => write!(
                f,
                "CCA with n={n} samples does not exceed dimensions ({d1}, {d2}); correlations are inflated"
            ),
        }
    }
}

impl Warning {
    pub(crate) fn emit(self) -> Self {
        log::warn!("{self}");
        self
    }
}
