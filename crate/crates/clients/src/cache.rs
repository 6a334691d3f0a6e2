//! Append-only JSONL store of model responses keyed by request hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ClientError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub request: Value,
    pub response: String,
    /// Unix seconds at record time.
    pub timestamp: u64,
    pub provider: String,
}

pub struct ReplayCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    order: Mutex<Vec<String>>,
    writer: Mutex<Option<File>>,
}

fn io_err(path: &Path, source: std::io::Error) -> ClientError {
    ClientError::CacheIo {
        path: path.display().to_string(),
        source,
    }
}

impl ReplayCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            order: Mutex::new(Vec::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists; new entries are appended to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let cache = Self {
            path: Some(path.clone()),
            ..Self::in_memory()
        };
        if path.exists() {
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            let mut entries = cache.entries.write().expect("cache lock");
            let mut order = cache.order.lock().expect("cache lock");
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| io_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| ClientError::CacheCorrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                if !entries.contains_key(&entry.hash) {
                    order.push(entry.hash.clone());
                    entries.insert(entry.hash.clone(), entry);
                }
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(hash).map(|e| e.response.clone())
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.entries.read().expect("cache lock").contains_key(hash)
    }

    /// Adds `entry` unless its hash is already present. Returns whether it
    /// was written.
    pub fn insert(&self, entry: CacheEntry) -> Result<bool> {
        let mut writer = self.writer.lock().expect("cache lock");
        if self.contains(&entry.hash) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            if writer.is_none() {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
                }
                let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
                *writer = Some(file);
            }
            let line = serde_json::to_string(&entry)? + "\n";
            let file = writer.as_mut().expect("writer opened");
            file.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
            file.flush().map_err(|e| io_err(path, e))?;
        }
        self.order.lock().expect("cache lock").push(entry.hash.clone());
        self.entries.write().expect("cache lock").insert(entry.hash.clone(), entry);
        Ok(true)
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let entries = self.entries.read().expect("cache lock");
        self.order
            .lock()
            .expect("cache lock")
            .iter()
            .map(|h| entries[h].clone())
            .collect()
    }
}
