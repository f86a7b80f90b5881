use std::fmt;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension { op: &'static str, lhs: Shape, rhs: Shape },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite value at {location}: {message}")]
    Numeric { location: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse class of an [`Error`], used by the command-line front end to pick
/// exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Shape,
    Numeric,
    Internal,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Shape => "shape",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Internal => "internal",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Dimension { .. } => ErrorCategory::Shape,
            Error::Parameter(_) | Error::Argument(_) | Error::Config { .. } => ErrorCategory::Config,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => ErrorCategory::Data,
            Error::Numeric { .. } => ErrorCategory::Numeric,
            Error::Internal(_) => ErrorCategory::Internal,
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            lhs: Shape(lhs.0, lhs.1),
            rhs: Shape(rhs.0, rhs.1),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Matrix shape as `rows x cols`, used in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
