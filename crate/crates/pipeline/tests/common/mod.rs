//! Writes seeded synthetic data sets to disk in the pipeline's input
//! formats.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use slime_core::store::write_jsonl;
use slime_core::synthetic::{dual_encoder_fixture, DualEncoderSpec};
use slime_pipeline::{Context, ExperimentConfig};

pub fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

pub fn context(config_path: &Path) -> Context {
    Context::new(ExperimentConfig::load(config_path).unwrap(), None)
}

/// Retriever settings small enough for a test budget.
pub fn quick_retriever() -> Value {
    json!({
        "dcn": {"cross_layers": 2, "hidden": [64, 32]},
        "contrastive": {"epochs": 10},
        "ranker": {"epochs": 8}
    })
}

/// Embedding matrices, tag embeddings and tag records of the dual-encoder
/// fixture, plus a config pointing at them.
pub fn write_dual_encoder(dir: &Path, spec: &DualEncoderSpec, b_sweep: &[usize]) -> PathBuf {
    let fx = dual_encoder_fixture(spec).unwrap();
    fx.attack.cast::<f32>().save(dir.join("attack.emb")).unwrap();
    fx.victim.cast::<f32>().save(dir.join("victim.emb")).unwrap();
    fx.attack_tags.cast::<f32>().save(dir.join("tags.emb")).unwrap();
    write_jsonl(dir.join("tags.jsonl"), &fx.records).unwrap();
    let config = json!({
        "seed": 7,
        "data": {
            "attack": {"path": "attack.emb"},
            "tag_embeddings": {"path": "tags.emb"},
            "victims": [{"name": "victim", "embeddings": {"path": "victim.emb"}}],
            "tags": "tags.jsonl",
            "split": {"val": 100, "test": 500}
        },
        "alignment": {"b_sweep": b_sweep},
        "retrieval": {"k": 10, "k_sweep": [10], "m_sweep": [1, 5, 10, 25, 50, 100]},
        "retriever": quick_retriever()
    });
    write_config(dir, &config)
}

pub fn kitchen_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kitchen")
}

/// Relative paths of every file under `dir`, sorted.
pub fn expected_files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}
