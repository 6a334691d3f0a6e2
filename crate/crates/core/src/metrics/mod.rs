//! Evaluation metrics: semantic-neighborhood preservation, exact set overlap,
//! text overlap with best-match aggregation and structured scene F1.

pub mod best_match;
pub mod neighborhood;
pub mod sets;
pub mod structured;
pub mod text;

pub use best_match::{aggregate_score, best_match_score, Aggregation, TextScore};
pub use neighborhood::NeighborhoodIndex;
pub use sets::{exact_retrieval_prf, harmonic_mean, set_prf, Prf};
pub use structured::{structured_f1, Predicate, Relation, SceneLabel, StructuredF1, StructuredScene};
pub use text::{bleu4, meteor, rouge_l, rouge_n, tokenize, TextMetric};
