//! Error type shared by the library and surfaced by the CLI.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the pipeline. Each variant maps to a stable short
/// code so callers (and shell scripts driving the CLI) can branch on
/// the class of failure without parsing prose.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure while reading or writing an artifact.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad magic, truncated payload, unparsable text).
    #[error("{0}")]
    Format(String),

    /// Dimension or dtype mismatch between tensors, masks, or parameters.
    #[error("{0}")]
    Shape(String),

    /// A documented precondition was violated by the caller or the config.
    #[error("{0}")]
    Contract(String),

    /// A computation produced a non-finite value where one is not allowed.
    #[error("{0}")]
    Numeric(String),
}

impl Error {
    /// Stable machine-parsable code for this failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Format(_) => "E_FORMAT",
            Error::Shape(_) => "E_SHAPE",
            Error::Contract(_) => "E_CONTRACT",
            Error::Numeric(_) => "E_NUMERIC",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        assert_eq!(Error::Format("x".into()).code(), "E_FORMAT");
        assert_eq!(Error::Shape("x".into()).code(), "E_SHAPE");
        assert_eq!(Error::Contract("x".into()).code(), "E_CONTRACT");
        assert_eq!(Error::Numeric("x".into()).code(), "E_NUMERIC");
        let io = Error::io("/tmp/x", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.code(), "E_IO");
        assert!(io.to_string().contains("/tmp/x"));
    }
}
