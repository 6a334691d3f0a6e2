//! Experiment configuration: one JSON file, `${VAR}` interpolation in every
//! string value, paths relative to the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use slime_clients::{canonical_json, Mode, RetryPolicy};
use slime_core::alignment::Solver;
use slime_core::retriever::RetrieverConfig;

use crate::error::{PipelineError, Result};

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRef {
    pub path: String,
    /// Id sidecar; defaults to `path` with an `.ids` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimRef {
    pub name: String,
    pub embeddings: MatrixRef,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Attack-space image embeddings.
    pub attack: Option<MatrixRef>,
    /// Attack-space tag embeddings; ids are the tag phrases.
    pub tag_embeddings: Option<MatrixRef>,
    pub victims: Vec<VictimRef>,
    /// Ground-truth tag records (JSONL).
    pub tags: Option<String>,
    /// Human reference captions (JSONL).
    pub captions: Option<String>,
    /// Captions generated from ground-truth tags (JSONL).
    pub gt_captions: Option<String>,
    /// Directory of `<image_id>.{png,jpg,jpeg}` files.
    pub images: Option<String>,
    /// Precomputed retrieval records; defaults to the `retrieve` output.
    pub retrievals: Option<String>,
    pub split: SplitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub b_sweep: Vec<usize>,
    pub solver: Solver,
    pub ridge_lambda: f64,
    /// Re-normalize aligned rows before retrieval.
    pub renormalize: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            b_sweep: vec![1, 10, 100, 1000, 10000],
            solver: Solver::SvdPinv,
            ridge_lambda: 0.0,
            renormalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub k_sweep: Vec<usize>,
    pub m_sweep: Vec<usize>,
    /// Checkpoint directory; defaults to `<output>/retriever`.
    pub checkpoint: Option<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            k_sweep: vec![5, 10, 15, 20, 25],
            m_sweep: (1..=100).collect(),
            checkpoint: None,
        }
    }
}

impl RetrievalConfig {
    /// `k` together with the sweep, ascending and deduplicated.
    pub fn all_k(&self) -> Vec<usize> {
        let mut ks: BTreeSet<usize> = self.k_sweep.iter().copied().collect();
        ks.insert(self.k);
        ks.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub mode: Mode,
    /// JSONL replay cache.
    pub cache: Option<String>,
    pub provider: String,
    pub model: String,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            cache: None,
            provider: "openai".into(),
            model: "gpt-4o".into(),
            max_tokens: 1024,
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionAttackConfig {
    pub n_captions: usize,
}

impl Default for CaptionAttackConfig {
    fn default() -> Self {
        Self { n_captions: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Tags,
    Captions,
    Image,
}

impl Evidence {
    pub fn name(self) -> &'static str {
        match self {
            Evidence::Tags => "tags",
            Evidence::Captions => "captions",
            Evidence::Image => "image",
        }
    }
}

/// Canonical name of a conditioning setting, e.g. `captions+tags`.
pub fn setting_name(setting: &BTreeSet<Evidence>) -> String {
    setting.iter().map(|e| e.name()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Conditioning settings for scene extraction.
    pub settings: Vec<BTreeSet<Evidence>>,
    /// Reference scenes (JSONL `{image_id, scene}`); when absent they are
    /// extracted from the human captions.
    pub reference_scenes: Option<String>,
    /// Setting whose scenes feed the caption-regeneration ablation; defaults
    /// to the last setting.
    pub ablation_from: Option<BTreeSet<Evidence>>,
    pub ablation: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            settings: vec![
                [Evidence::Tags].into(),
                [Evidence::Captions].into(),
                [Evidence::Tags, Evidence::Captions].into(),
            ],
            reference_scenes: None,
            ablation_from: None,
            ablation: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn ablation_setting(&self) -> Option<&BTreeSet<Evidence>> {
        self.ablation_from.as_ref().or(self.settings.last())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub label: String,
    pub retrievals: String,
    pub captions: String,
    #[serde(default)]
    pub gt_captions: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossDomainConfig {
    pub domains: Vec<DomainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Not part of the config hash.
    pub output_dir: Option<String>,
    pub data: DataConfig,
    pub alignment: AlignmentConfig,
    pub retrieval: RetrievalConfig,
    pub retriever: RetrieverConfig,
    pub client: ClientConfig,
    pub captions: CaptionAttackConfig,
    pub adaptive: AdaptiveConfig,
    pub cross_domain: CrossDomainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: None,
            data: DataConfig::default(),
            alignment: AlignmentConfig::default(),
            retrieval: RetrievalConfig::default(),
            retriever: RetrieverConfig::default(),
            client: ClientConfig::default(),
            captions: CaptionAttackConfig::default(),
            adaptive: AdaptiveConfig::default(),
            cross_domain: CrossDomainConfig::default(),
        }
    }
}

/// Replaces `${NAME}` with `lookup(NAME)`; `$$` escapes a literal `$`.
pub fn interpolate(s: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 1..];
        if let Some(tail) = after.strip_prefix('$') {
            out.push('$');
            rest = tail;
        } else if let Some(body) = after.strip_prefix('{') {
            let end = body.find('}').ok_or_else(|| config_err(format!("unterminated ${{ in {s:?}")))?;
            let name = &body[..end];
            if name.is_empty() {
                return Err(config_err("empty variable name in ${}"));
            }
            let value = lookup(name).ok_or_else(|| config_err(format!("environment variable {name} is not set")))?;
            out.push_str(&value);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<()> {
    match v {
        Value::String(s) => *s = interpolate(s, lookup)?,
        Value::Array(items) => items.iter_mut().try_for_each(|x| interpolate_value(x, lookup))?,
        Value::Object(map) => map.values_mut().try_for_each(|x| interpolate_value(x, lookup))?,
        _ => {}
    }
    Ok(())
}

fn ascending(name: &str, values: &[usize]) -> Result<()> {
    if values.is_empty() {
        return Err(config_err(format!("{name} must not be empty")));
    }
    if values.contains(&0) {
        return Err(config_err(format!("{name} entries must be positive")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// A validated config and the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| config_err(format!("config is not valid JSON: {e}")))?;
        interpolate_value(&mut v, lookup)?;
        serde_json::from_value(v).map_err(|e| config_err(e.to_string()))
    }

    /// Reads, interpolates from the process environment, and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::from_json(&text, &|k| std::env::var(k).ok())?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate(&base_dir)?;
        Ok(LoadedConfig { config, base_dir })
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let v = serde_json::to_value(&c).expect("config serializes");
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    fn input_paths(&self) -> Vec<(String, &str)> {
        let mut out = Vec::new();
        let d = &self.data;
        if let Some(m) = &d.attack {
            out.push(("data.attack.path".to_owned(), m.path.as_str()));
            if let Some(ids) = &m.ids {
                out.push(("data.attack.ids".to_owned(), ids.as_str()));
            }
        }
        if let Some(m) = &d.tag_embeddings {
            out.push(("data.tag_embeddings.path".to_owned(), m.path.as_str()));
            if let Some(ids) = &m.ids {
                out.push(("data.tag_embeddings.ids".to_owned(), ids.as_str()));
            }
        }
        for v in &d.victims {
            out.push((format!("data.victims[{}].path", v.name), v.embeddings.path.as_str()));
            if let Some(ids) = &v.embeddings.ids {
                out.push((format!("data.victims[{}].ids", v.name), ids.as_str()));
            }
        }
        for (label, p) in [
            ("data.tags", &d.tags),
            ("data.captions", &d.captions),
            ("data.gt_captions", &d.gt_captions),
            ("data.images", &d.images),
            ("data.retrievals", &d.retrievals),
            ("adaptive.reference_scenes", &self.adaptive.reference_scenes),
        ] {
            if let Some(p) = p {
                out.push((label.to_owned(), p.as_str()));
            }
        }
        for dom in &self.cross_domain.domains {
            out.push((format!("cross_domain[{}].retrievals", dom.label), dom.retrievals.as_str()));
            out.push((format!("cross_domain[{}].captions", dom.label), dom.captions.as_str()));
            if let Some(p) = &dom.gt_captions {
                out.push((format!("cross_domain[{}].gt_captions", dom.label), p.as_str()));
            }
        }
        if self.client.mode == Mode::Replay {
            if let Some(p) = &self.client.cache {
                out.push(("client.cache".to_owned(), p.as_str()));
            }
        }
        out
    }

    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        for (label, p) in self.input_paths() {
            if !base_dir.join(p).exists() {
                return Err(config_err(format!("{label}: {p} does not exist")));
            }
        }
        ascending("alignment.b_sweep", &self.alignment.b_sweep)?;
        ascending("retrieval.k_sweep", &self.retrieval.k_sweep)?;
        ascending("retrieval.m_sweep", &self.retrieval.m_sweep)?;
        if self.retrieval.k == 0 {
            return Err(config_err("retrieval.k must be positive"));
        }
        if self.captions.n_captions == 0 {
            return Err(config_err("captions.n_captions must be positive"));
        }
        if self.client.concurrency == 0 {
            return Err(config_err("client.concurrency must be positive"));
        }
        let mut names = BTreeSet::new();
        for v in &self.data.victims {
            if v.name.trim().is_empty() || v.name == crate::ATTACK_SOURCE {
                return Err(config_err(format!("invalid victim name {:?}", v.name)));
            }
            if !names.insert(&v.name) {
                return Err(config_err(format!("duplicate victim name {:?}", v.name)));
            }
        }
        if self.adaptive.settings.is_empty() {
            return Err(config_err("adaptive.settings must not be empty"));
        }
        if self.adaptive.settings.iter().any(BTreeSet::is_empty) {
            return Err(config_err("adaptive.settings contains an empty conditioning set"));
        }
        if self.adaptive.ablation_from.as_ref().is_some_and(BTreeSet::is_empty) {
            return Err(config_err("adaptive.ablation_from is an empty conditioning set"));
        }
        let mut labels = BTreeSet::new();
        for d in &self.cross_domain.domains {
            if d.label.trim().is_empty() {
                return Err(config_err("cross_domain domain without a label"));
            }
            if !labels.insert(&d.label) {
                return Err(config_err(format!("duplicate domain label {:?}", d.label)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(k: &str) -> Option<String> {
        (k == "HOME_DIR").then(|| "/data".to_owned())
    }

    #[test]
    fn interpolation() {
        assert_eq!(interpolate("${HOME_DIR}/x", &env).unwrap(), "/data/x");
        assert_eq!(interpolate("cost $$5 and $x", &env).unwrap(), "cost $5 and $x");
        assert!(interpolate("${MISSING}", &env).is_err());
        assert!(interpolate("${HOME_DIR", &env).is_err());
    }

    #[test]
    fn defaults_and_hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(r#"{"output_dir": "a"}"#, &env).unwrap();
        let b = ExperimentConfig::from_json(r#"{"output_dir": "b"}"#, &env).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.alignment.b_sweep, vec![1, 10, 100, 1000, 10000]);
        assert_eq!(a.retrieval.m_sweep.len(), 100);
        let c = ExperimentConfig::from_json(r#"{"seed": 8}"#, &env).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_failures() {
        let dir = Path::new(".");
        let bad = |json: &str| ExperimentConfig::from_json(json, &env).and_then(|c| c.validate(dir)).is_err();
        assert!(bad(r#"{"alignment": {"b_sweep": [10, 1]}}"#));
        assert!(bad(r#"{"retrieval": {"k_sweep": []}}"#));
        assert!(bad(r#"{"adaptive": {"settings": [[]]}}"#));
        assert!(bad(r#"{"data": {"tags": "/definitely/not/here.jsonl"}}"#));
        assert!(bad(r#"{"cross_domain": {"domains": [{"label": "", "retrievals": ".", "captions": "."}]}}"#));
        assert!(bad(r#"{"unknown_field": 1}"#));
        assert!(!bad(r#"{}"#));
    }
}
