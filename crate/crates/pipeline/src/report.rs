//! Reports: JSON for machines, Markdown for people, one CSV per table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{PipelineError, Result};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub manifest: RunManifest,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => format!("{:.4}", n.as_f64().unwrap()),
        other => other.to_string(),
    }
}

fn csv_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let m = &self.manifest;
        let mut s = format!("# {}\n\n", self.name);
        let _ = writeln!(s, "- config hash: `{}`", m.config_hash);
        let _ = writeln!(s, "- seed: {}", m.seed);
        let _ = writeln!(s, "- client mode: {}", m.client_mode);
        let versions: Vec<String> = m.module_versions.iter().map(|(k, v)| format!("{k} {v}")).collect();
        let _ = writeln!(s, "- modules: {}", versions.join(", "));
        if !m.prompt_template_ids.is_empty() {
            let ids: Vec<&str> = m.prompt_template_ids.iter().map(String::as_str).collect();
            let _ = writeln!(s, "- prompts: {}", ids.join(", "));
        }
        let _ = writeln!(s, "- excluded items: {}", m.excluded.len());
        for w in &m.warnings {
            let _ = writeln!(s, "- warning: {w}");
        }
        if !self.summary.is_empty() {
            s.push_str("\n## summary\n\n");
            for (k, v) in &self.summary {
                let _ = writeln!(s, "- {k}: {}", cell_text(v));
            }
        }
        for t in &self.tables {
            let _ = write!(s, "\n## {}\n\n| {} |\n|", t.name, t.columns.join(" | "));
            s.push_str(&" --- |".repeat(t.columns.len()));
            s.push('\n');
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(cell_text).collect();
                let _ = writeln!(s, "| {} |", cells.join(" | "));
            }
        }
        s
    }

    /// Writes `<name>.json`, `<name>.md` and `<name>.<table>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.name));
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| PipelineError::io(&json, e))?;
        written.push(json);
        let md = dir.join(format!("{}.md", self.name));
        fs::write(&md, self.to_markdown()).map_err(|e| PipelineError::io(&md, e))?;
        written.push(md);
        for t in &self.tables {
            let path = dir.join(format!("{}.{}.csv", self.name, t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.columns)?;
            for row in &t.rows {
                w.write_record(row.iter().map(csv_text))?;
            }
            w.flush().map_err(|e| PipelineError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
