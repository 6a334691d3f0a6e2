use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use slime_clients::{ChatClient, Endpoint, FailOnUseTransport, HttpTransport, Mode, ModelSpec, ReplayCache, Sleeper, Transport};
use slime_core::store::{load_captions, load_tags, sidecar_ids_path, CaptionSource, EmbeddingMatrix, TagRecord};
use slime_core::{Embeddings, TagVocabulary};

use crate::config::{ExperimentConfig, LoadedConfig, MatrixRef};
use crate::error::{PipelineError, Result};
use crate::manifest::{checksum_path, module_versions, Exclusion, RunManifest};
use crate::report::{Report, Table};

/// Everything a stage needs: config, resolved directories and the client.
pub struct Context {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    transport: Option<Arc<dyn Transport>>,
    sleeper: Option<Arc<dyn Sleeper>>,
    endpoint: Option<Endpoint>,
    client: OnceLock<Arc<ChatClient>>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Context {
    /// `out_dir` overrides `output_dir` from the config, which defaults to
    /// `out` next to the config file.
    pub fn new(loaded: LoadedConfig, out_dir: Option<PathBuf>) -> Self {
        let out_dir = out_dir.unwrap_or_else(|| loaded.base_dir.join(loaded.config.output_dir.as_deref().unwrap_or("out")));
        Self {
            config: loaded.config,
            base_dir: loaded.base_dir,
            out_dir,
            transport: None,
            sleeper: None,
            endpoint: None,
            client: OnceLock::new(),
        }
    }

    /// Replaces the network transport (tests, fail-on-use audits).
    pub fn with_transport(mut self, t: Arc<dyn Transport>) -> Self {
        self.transport = Some(t);
        self
    }

    pub fn with_sleeper(mut self, s: Arc<dyn Sleeper>) -> Self {
        self.sleeper = Some(s);
        self
    }

    /// Endpoint for the configured provider instead of the environment.
    pub fn with_endpoint(mut self, e: Endpoint) -> Self {
        self.endpoint = Some(e);
        self
    }

    pub fn input(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    pub fn deterministic(&self) -> bool {
        self.config.client.mode == Mode::Replay
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            provider: self.config.client.provider.clone(),
            model: self.config.client.model.clone(),
            max_tokens: self.config.client.max_tokens,
        }
    }

    pub fn client(&self) -> Result<Arc<ChatClient>> {
        if let Some(c) = self.client.get() {
            return Ok(c.clone());
        }
        let cfg = &self.config.client;
        let cache = match &cfg.cache {
            Some(p) => ReplayCache::open(self.input(p))?,
            None if cfg.mode == Mode::Live => ReplayCache::in_memory(),
            None => return Err(PipelineError::Config(format!("client.cache is required in {} mode", cfg.mode.as_str()))),
        };
        let transport: Arc<dyn Transport> = match (&self.transport, cfg.mode) {
            (Some(t), _) => t.clone(),
            // replay must never reach the network
            (None, Mode::Replay) => Arc::new(FailOnUseTransport::default()),
            (None, _) => Arc::new(HttpTransport::default()),
        };
        let mut client = ChatClient::new(cfg.mode, transport, Arc::new(cache))
            .with_concurrency(cfg.concurrency)
            .with_retry(cfg.retry.clone());
        if let Some(s) = &self.sleeper {
            client = client.with_sleeper(s.clone());
        }
        if let Some(e) = &self.endpoint {
            client = client.with_endpoint(cfg.provider.clone(), e.clone());
        }
        Ok(self.client.get_or_init(|| Arc::new(client)).clone())
    }

    pub fn stage(&self, name: &str) -> StageRun<'_> {
        StageRun {
            ctx: self,
            name: name.to_owned(),
            started_at: (!self.deterministic()).then(now),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            excluded: Mutex::new(Vec::new()),
            warnings: Vec::new(),
            prompts: BTreeSet::new(),
        }
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, field: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| PipelineError::Config(format!("{field} is required for this stage")))
    }

    pub fn load_matrix(&self, m: &MatrixRef) -> Result<Embeddings> {
        let path = self.input(&m.path);
        let ids = m.ids.as_ref().map(|p| self.input(p)).unwrap_or_else(|| sidecar_ids_path(&path));
        Ok(EmbeddingMatrix::<f32>::load_with_ids(&path, &ids)?.cast::<f64>().l2_normalize()?)
    }

    pub fn load_vocab(&self) -> Result<TagVocabulary> {
        let m = self.load_matrix(self.require(&self.config.data.tag_embeddings, "data.tag_embeddings")?)?;
        Ok(TagVocabulary::from_matrix(&m)?)
    }

    pub fn load_tags(&self) -> Result<Vec<TagRecord>> {
        Ok(load_tags(self.input(self.require(&self.config.data.tags, "data.tags")?))?)
    }

    pub fn retrievals_path(&self) -> PathBuf {
        match &self.config.data.retrievals {
            Some(p) => self.input(p),
            None => self.out(RETRIEVALS),
        }
    }

    /// `retrievals_path`, which must already exist.
    pub fn existing_retrievals(&self) -> Result<PathBuf> {
        let path = self.retrievals_path();
        if !path.exists() {
            return Err(PipelineError::Config(format!("no retrievals at {}; run retrieve first or set data.retrievals", path.display())));
        }
        Ok(path)
    }
}

pub const RETRIEVALS: &str = "retrievals.jsonl";
pub const CAPTIONS: &str = "captions.jsonl";
pub const SCENES: &str = "scenes.jsonl";
pub const SPLIT: &str = "split.json";
pub const REPORTS: &str = "reports";

/// Caption sets of one source keyed by image id; duplicates are merged.
pub fn caption_map(path: &Path, source: Option<CaptionSource>) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for set in load_captions(path)? {
        if source.is_none_or(|s| s == set.source) {
            out.entry(set.image_id).or_default().extend(set.captions);
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::Input(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Per-stage manifest bookkeeping; `finish` writes the report.
pub struct StageRun<'a> {
    ctx: &'a Context,
    name: String,
    started_at: Option<u64>,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
    excluded: Mutex<Vec<Exclusion>>,
    warnings: Vec<String>,
    prompts: BTreeSet<String>,
}

impl StageRun<'_> {
    /// Records the checksum of an input given relative to the config.
    pub fn input(&mut self, label: &str, rel: &str) -> Result<PathBuf> {
        let path = self.ctx.input(rel);
        self.inputs.insert(label.to_owned(), checksum_path(&path)?);
        Ok(path)
    }

    pub fn input_path(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.to_owned(), checksum_path(path)?);
        Ok(())
    }

    pub fn matrix_input(&mut self, label: &str, m: &MatrixRef) -> Result<Embeddings> {
        self.input(&format!("{label}.path"), &m.path)?;
        let path = self.ctx.input(&m.path);
        let ids = m.ids.as_ref().map(|p| self.ctx.input(p)).unwrap_or_else(|| sidecar_ids_path(&path));
        self.input_path(&format!("{label}.ids"), &ids)?;
        self.ctx.load_matrix(m)
    }

    fn register(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.ctx.out(rel);
        self.artifacts.insert(rel.to_owned(), checksum_path(&path)?);
        Ok(path)
    }

    pub fn prepare(&self, rel: &str) -> Result<PathBuf> {
        let path = self.ctx.out(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        Ok(path)
    }

    pub fn write_jsonl<S: Serialize>(&mut self, rel: &str, records: &[S]) -> Result<PathBuf> {
        let path = self.prepare(rel)?;
        slime_core::store::write_jsonl(&path, records)?;
        self.register(rel)
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<PathBuf> {
        let path = self.prepare(rel)?;
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| PipelineError::io(&path, e))?;
        self.register(rel)
    }

    /// Registers an artifact written by other code (files or directories).
    pub fn artifact(&mut self, rel: &str) -> Result<PathBuf> {
        self.register(rel)
    }

    pub fn exclude(&self, unit: impl Into<String>, item_id: impl Into<String>, reason: impl Into<String>) {
        let e = Exclusion {
            unit: unit.into(),
            item_id: item_id.into(),
            reason: reason.into(),
        };
        log::warn!("excluded {} / {}: {}", e.unit, e.item_id, e.reason);
        self.excluded.lock().expect("lock").push(e);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn prompt(&mut self, id: &str) {
        self.prompts.insert(id.to_owned());
    }

    pub fn finish(self, summary: BTreeMap<String, Value>, tables: Vec<Table>) -> Result<Report> {
        let mut excluded = self.excluded.into_inner().expect("lock");
        excluded.sort();
        let cfg = &self.ctx.config;
        let report = Report {
            name: self.name.clone(),
            manifest: RunManifest {
                stage: self.name,
                config_hash: cfg.hash(),
                module_versions: module_versions(),
                prompt_template_ids: self.prompts,
                seed: cfg.seed,
                client_mode: cfg.client.mode.as_str().to_owned(),
                started_at: self.started_at,
                finished_at: self.started_at.map(|_| now()),
                inputs: self.inputs,
                artifacts: self.artifacts,
                excluded,
                warnings: self.warnings,
            },
            summary,
            tables,
        };
        report.write(&self.ctx.out(REPORTS))?;
        Ok(report)
    }
}
