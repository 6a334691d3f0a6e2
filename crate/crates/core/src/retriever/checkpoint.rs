//! Directory checkpoints: one EMBMAT01 block per weight tensor plus a JSON
//! manifest carrying shapes, scalars, seed and a config hash.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::retriever::dcn::DcnRanker;
use crate::retriever::projection::Projection;
use crate::retriever::{DualProjection, RetrieverConfig, RetrieverModel};
use crate::scalar::Scalar;
use crate::store::{read_matrix_payload, write_matrix_payload};

pub const CHECKPOINT_FORMAT: &str = "slime-retriever-v1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub file: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub dim: usize,
    pub seed: u64,
    pub temperature: f64,
    pub log_temperature: f64,
    pub image_gamma: f64,
    pub tag_gamma: f64,
    pub head_bias: f64,
    pub config: RetrieverConfig,
    pub config_hash: String,
    pub blocks: Vec<BlockEntry>,
}

/// SHA-256 of the compact JSON encoding of `config`.
pub fn config_hash(config: &RetrieverConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

fn blocks<T: Scalar>(model: &RetrieverModel<T>) -> Vec<(String, Array2<T>)> {
    let row = |v: &Array1<T>| v.clone().insert_axis(Axis(0));
    let mut out = Vec::new();
    for (prefix, p) in [("img_proj", &model.projections.image), ("tag_proj", &model.projections.tag)] {
        out.push((format!("{prefix}.weight"), p.weight.clone()));
        out.push((format!("{prefix}.bias"), row(&p.bias)));
    }
    let r = &model.ranker;
    for (l, (w, b)) in r.cross_w.iter().zip(&r.cross_b).enumerate() {
        out.push((format!("cross.{l}.weight"), w.clone()));
        out.push((format!("cross.{l}.bias"), row(b)));
    }
    for (k, (w, b)) in r.mlp_w.iter().zip(&r.mlp_b).enumerate() {
        out.push((format!("mlp.{k}.weight"), w.clone()));
        out.push((format!("mlp.{k}.bias"), row(b)));
    }
    out.push(("head.weight".into(), row(&r.head_w)));
    out
}

impl<T: Scalar> RetrieverModel<T> {
    /// Writes the checkpoint into `dir` (created if missing). Weight
    /// blocks are stored as f32.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for (name, values) in blocks(self) {
            let file = format!("{name}.bin");
            write_matrix_payload(&dir.join(&file), values.view())?;
            entries.push(BlockEntry {
                name,
                file,
                shape: [values.nrows(), values.ncols()],
            });
        }
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.into(),
            dim: self.dim(),
            seed: self.seed,
            temperature: self.temperature().as_f64(),
            log_temperature: self.projections.log_temperature.as_f64(),
            image_gamma: self.projections.image.gamma.as_f64(),
            tag_gamma: self.projections.tag.gamma.as_f64(),
            head_bias: self.ranker.head_b.as_f64(),
            config: self.config.clone(),
            config_hash: config_hash(&self.config),
            blocks: entries,
        };
        let path = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format {:?}", manifest.format)));
        }
        if config_hash(&manifest.config) != manifest.config_hash {
            return Err(Error::InvalidArgument("checkpoint config hash mismatch".into()));
        }
        let read = |name: &str| -> Result<Array2<T>> {
            let entry = manifest
                .blocks
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks block {name}")))?;
            let values: Array2<T> = read_matrix_payload(&dir.join(&entry.file))?;
            if values.dim() != (entry.shape[0], entry.shape[1]) {
                return Err(Error::DimMismatch(format!("block {name}: {:?} vs {:?}", values.dim(), entry.shape)));
            }
            Ok(values)
        };
        let vec = |name: &str| -> Result<Array1<T>> { Ok(read(name)?.row(0).to_owned()) };
        let proj = |prefix: &str, gamma: f64| -> Result<Projection<T>> {
            Ok(Projection {
                weight: read(&format!("{prefix}.weight"))?,
                bias: vec(&format!("{prefix}.bias"))?,
                gamma: T::lit(gamma),
            })
        };
        let dcn = &manifest.config.dcn;
        let ranker = DcnRanker {
            cross_w: (0..dcn.cross_layers).map(|l| read(&format!("cross.{l}.weight"))).collect::<Result<_>>()?,
            cross_b: (0..dcn.cross_layers).map(|l| vec(&format!("cross.{l}.bias"))).collect::<Result<_>>()?,
            mlp_w: (0..dcn.hidden.len()).map(|k| read(&format!("mlp.{k}.weight"))).collect::<Result<_>>()?,
            mlp_b: (0..dcn.hidden.len()).map(|k| vec(&format!("mlp.{k}.bias"))).collect::<Result<_>>()?,
            head_w: vec("head.weight")?,
            head_b: T::lit(manifest.head_bias),
        };
        let model = Self {
            projections: DualProjection {
                image: proj("img_proj", manifest.image_gamma)?,
                tag: proj("tag_proj", manifest.tag_gamma)?,
                log_temperature: T::lit(manifest.log_temperature),
            },
            ranker,
            config: manifest.config,
            seed: manifest.seed,
        };
        if model.dim() != manifest.dim || model.ranker.input_width() != super::feature_width(manifest.dim) {
            return Err(Error::DimMismatch("checkpoint shapes disagree with its dimension".into()));
        }
        if !model.all_finite() {
            return Err(Error::InvalidArgument("checkpoint holds non-finite parameters".into()));
        }
        Ok(model)
    }
}
