use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] uplift::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid model file: {source}")]
    ModelFile {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 2 for usage and validation problems, 1 for I/O and internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::ModelFile { .. } | Self::Config { .. } => 2,
            Self::Core(e) => match e {
                uplift::Error::Io(_) => 1,
                _ => 2,
            },
            Self::Io { .. } | Self::Internal(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
