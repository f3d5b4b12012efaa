use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("cannot decode {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("malformed record in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The requested relation or transform cannot be realized from the given data.
    #[error("not satisfiable: {0}")]
    NotSatisfiable(String),

    #[error("corpus too degenerate: retries exhausted for relations [{}]", categories.join(", "))]
    DegenerateCorpus { categories: Vec<String> },

    #[error("training diverged at epoch {epoch}, batch {batch} (lr {learning_rate}): {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("fingerprint mismatch for {what}: expected {expected}, found {found} (pass --force to override)")]
    FingerprintMismatch {
        what: String,
        expected: String,
        found: String,
    },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }
}

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(format!($($arg)*)) };
}
pub(crate) use input_err;
