//! `report`: an index over every stage report in the output directory.

use std::collections::BTreeMap;

use serde_json::json;

use crate::context::{Context, REPORTS};
use crate::error::{PipelineError, Result};
use crate::report::{Report, Table};

pub const SUMMARY: &str = "summary";

pub fn report(ctx: &Context) -> Result<Report> {
    let dir = ctx.out(REPORTS);
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| PipelineError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_stem().is_some_and(|s| s != SUMMARY))
        .collect();
    paths.sort();
    let mut run = ctx.stage(SUMMARY);
    let mut table = Table::new("stages", &["stage", "config_hash", "client_mode", "tables", "excluded", "warnings"]);
    let mut summary = BTreeMap::new();
    for p in &paths {
        let r = Report::load(p)?;
        run.input_path(&format!("reports/{}", r.name), p)?;
        table.push(vec![
            json!(r.name),
            json!(r.manifest.config_hash),
            json!(r.manifest.client_mode),
            json!(r.tables.len()),
            json!(r.manifest.excluded.len()),
            json!(r.manifest.warnings.len()),
        ]);
        for (k, v) in r.summary {
            summary.insert(format!("{}.{k}", r.name), v);
        }
    }
    run.finish(summary, vec![table])
}
