use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("provider returned status {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("could not parse model output ({reason}); raw response retained")]
    Parse { reason: String, raw: String },
    #[error("replay cache has no entry for request {0}")]
    CacheMiss(String),
    #[error("no input modality supplied")]
    NoInputs,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("provider {0:?} is not configured (set SLIME_BASE_URL_{1})")]
    UnknownProvider(String, String),
    #[error("cache i/o on {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache line {line} malformed: {reason}")]
    CacheCorrupt { line: usize, reason: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ClientError {
    /// True for failures a provider may recover from on retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Provider { status, .. } if *status == 429 || *status >= 500)
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;
