//! JSONL records exchanged between stages.

use serde::{Deserialize, Serialize};
use slime_core::metrics::StructuredScene;

/// Top-K tags retrieved for one item from one embedding source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    /// Victim name, or `attack` for the attack model's own embeddings.
    pub source: String,
    /// Alignment sample size; null for the attack source.
    pub b: Option<usize>,
    pub item_id: String,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub source: String,
    pub b: Option<usize>,
    pub k: usize,
    pub item_id: String,
    pub prompt_id: String,
    pub request_hash: String,
    pub captions: Vec<String>,
    /// Unparsed model output, kept for audit.
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    /// `reference` for reference scenes.
    pub source: String,
    pub b: Option<usize>,
    pub setting: String,
    pub item_id: String,
    pub scene: StructuredScene,
    pub dropped_predicates: usize,
    pub malformed_items: usize,
    pub request_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScene {
    pub image_id: String,
    pub scene: StructuredScene,
}

/// `b` as a report cell.
pub fn b_cell(b: Option<usize>) -> serde_json::Value {
    b.map_or(serde_json::Value::Null, serde_json::Value::from)
}
