use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub unit: String,
    pub item_id: String,
    pub reason: String,
}

/// Provenance embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub module_versions: BTreeMap<String, String>,
    pub prompt_template_ids: BTreeSet<String>,
    pub seed: u64,
    pub client_mode: String,
    /// Unix seconds; null in replay mode so reruns are byte-identical.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    /// SHA-256 of each input, keyed by config field.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each artifact written, keyed by path under the output dir.
    pub artifacts: BTreeMap<String, String>,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

pub fn module_versions() -> BTreeMap<String, String> {
    [
        ("slime-core", slime_core::VERSION),
        ("slime-clients", slime_clients::VERSION),
        ("slime-pipeline", crate::VERSION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

/// SHA-256 of a file, or of a directory's sorted `(relative name, bytes)` listing.
pub fn checksum_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            h.update(rel.as_bytes());
            h.update([0]);
            let p = path.join(&rel);
            h.update(fs::read(&p).map_err(|e| PipelineError::io(&p, e))?);
        }
    } else {
        h.update(fs::read(path).map_err(|e| PipelineError::io(path, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let entry = entry.map_err(|e| PipelineError::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}
