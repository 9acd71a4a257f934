use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sdcn::Error),

    #[error("{}:{line}: unknown config key {key:?}", path.display())]
    UnknownKey { path: PathBuf, line: usize, key: String },

    #[error("config key {key}: {message}")]
    BadValue { key: String, message: String },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// Format error at `path:line`, reported through the core error type.
    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Core(sdcn::Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        })
    }
}
