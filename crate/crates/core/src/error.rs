use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A required field or property is absent from an input file.
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    /// A value is present but unusable (non-finite, unnormalizable, ...).
    #[error("{path}: data error{}: {message}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    Data {
        path: PathBuf,
        record: Option<usize>,
        message: String,
    },

    #[error("corrupt clustered scene{}: {message}", chunk.as_ref().map(|c| format!(" (chunk {c})")).unwrap_or_default())]
    Corruption {
        chunk: Option<String>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Internal invariant broken, e.g. unsorted input reaching the rasterizer.
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corruption(chunk: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        Error::Corruption {
            chunk: chunk.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's inputs rather than by a bug.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Contract(_))
    }
}
