//! Core numerics for measuring semantic leakage from image embeddings:
//! embedding storage, least-squares space alignment, the local tag
//! retriever (contrastive projections + cross-network ranker) and the
//! evaluation metrics.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below pin the
//! precisions used by the command-line pipeline.

pub mod alignment;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod retriever;
pub mod scalar;
pub mod store;
pub mod synthetic;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Embeddings as stored on disk.
pub type Embeddings32 = store::EmbeddingMatrix<f32>;
/// Embeddings promoted for fitting and training.
pub type Embeddings = store::EmbeddingMatrix<f64>;
pub type AlignmentMap = alignment::AlignmentMap<f64>;
pub type TagVocabulary = vocab::TagVocabulary<f64>;
pub type RetrieverModel = retriever::RetrieverModel<f64>;
pub type TrainingSet = retriever::TrainingSet<f64>;
