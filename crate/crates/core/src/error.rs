use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected EMBMAT01")]
    BadMagic,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("id file has {ids} entries but matrix has {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("requested {requested} ids but only {available} available")]
    NotEnoughIds { requested: usize, available: usize },
    #[error("row ids differ at position {0}")]
    IdOrderMismatch(usize),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("no positives for index {0}")]
    EmptyPositives(usize),
    #[error("group {0} has no positives or no negatives")]
    EmptyGroupSide(usize),
    #[error("K={k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("m={m} outside 1..={n}")]
    MOutOfRange { m: usize, n: usize },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("empty set")]
    EmptySet,
    #[error("empty text")]
    EmptyText,
    #[error("missing item {0:?}")]
    MissingItem(String),
    #[error("invalid predicate {0:?}")]
    InvalidPredicate(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
