use std::path::PathBuf;

/// Errors surfaced through the public API.
///
/// Shape and tape misuse inside the numeric engine are programming errors and
/// panic with a message naming the offending dimensions instead of returning
/// one of these variants.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed {format} data in {path}: {detail}")]
    Format {
        format: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at iteration {iteration}: {component} is not finite")]
    Diverged { component: &'static str, iteration: u64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(format: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format { format, path: path.into(), detail: detail.into() }
    }
}
