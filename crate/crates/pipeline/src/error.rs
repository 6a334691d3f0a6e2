use std::path::PathBuf;

use slime_clients::ClientError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] slime_core::Error),
    #[error("data error: {0}")]
    Input(String),
    #[error("provider error: {0}")]
    Provider(#[from] ClientError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 config, 3 data, 4 provider, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) | PipelineError::Input(_) => 3,
            PipelineError::Provider(_) => 4,
            PipelineError::Io { .. } | PipelineError::Json(_) | PipelineError::Csv(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
