use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {context}{}", fmt_iteration(*.iteration))]
    NonFinite {
        context: String,
        iteration: Option<usize>,
    },

    #[error("run diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {} at row {row}: {message}", path.display())]
    Format {
        path: PathBuf,
        row: usize,
        message: String,
    },
}

fn fmt_iteration(iteration: Option<usize>) -> String {
    match iteration {
        Some(k) => format!(" at iteration {k}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach an iteration index to numeric errors raised below the orchestrator.
    pub fn at_iteration(self, k: usize) -> Self {
        match self {
            Error::NonFinite { context, .. } => Error::NonFinite {
                context,
                iteration: Some(k),
            },
            other => other,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
