//! `attack-captions`, `attack-adaptive` and `eval-cross-domain`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use slime_clients::prompts::{CAPTIONS_FROM_SCENE, CAPTIONS_FROM_TAGS, SCENE_LABELS, SCENE_OBJECTS, SCENE_RELATIONS, SYSTEM};
use slime_clients::{
    extract_scene, generate_captions_from_scene, generate_captions_from_tags, ChatClient, ClientError, ImagePayload, ModelSpec, SceneExtraction,
    SceneInputs, SceneParts,
};
use slime_core::metrics::{best_match_score, structured_f1, StructuredScene, TextMetric};
use slime_core::store::CaptionSource;

use crate::config::{setting_name, Evidence};
use crate::context::{caption_map, read_jsonl, Context, StageRun, CAPTIONS, SCENES};
use crate::error::{PipelineError, Result};
use crate::records::{b_cell, CaptionRecord, ReferenceScene, RetrievalRecord, SceneRecord};
use crate::report::{Report, Table};
use crate::ATTACK_SOURCE;

type Refs = BTreeMap<String, Vec<String>>;

fn unit_name(source: &str, b: Option<usize>) -> String {
    format!("{source}/b={}", b.map_or("-".into(), |b| b.to_string()))
}

/// Splits per-item outcomes into successes and parse failures; any other
/// client error aborts the stage.
fn settle<T>(out: std::result::Result<T, ClientError>) -> Result<std::result::Result<T, String>> {
    match out {
        Ok(v) => Ok(Ok(v)),
        Err(ClientError::Parse { reason, .. }) => Ok(Err(format!("unparseable response: {reason}"))),
        Err(e) => Err(PipelineError::Provider(e)),
    }
}

/// Best-match rows `[reference, metric, value, items]` of `hyps` against
/// each available reference set.
fn score_rows(run: &StageRun<'_>, unit: &str, hyps: &Refs, references: &[(&str, Option<&Refs>)]) -> Result<Vec<Vec<Value>>> {
    let mut rows = Vec::new();
    for (name, refs) in references {
        let Some(refs) = refs else { continue };
        let scored: Refs = hyps
            .iter()
            .filter(|(item, _)| {
                let ok = refs.contains_key(*item);
                if !ok {
                    run.exclude(format!("{unit}/{name}"), item.as_str(), "no reference captions");
                }
                ok
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for metric in TextMetric::ALL {
            let value = if scored.is_empty() {
                Value::Null
            } else {
                json!(best_match_score(&scored, refs, metric)?.value)
            };
            rows.push(vec![json!(name), json!(metric.name()), value, json!(scored.len())]);
        }
    }
    Ok(rows)
}

struct CaptionRun {
    records: Vec<CaptionRecord>,
    /// `[source, b, k, reference, metric, value, items]`
    rows: Vec<Vec<Value>>,
}

fn caption_attack_core(
    ctx: &Context,
    run: &mut StageRun<'_>,
    retrievals: &[RetrievalRecord],
    human: Option<&Refs>,
    generated: Option<&Refs>,
    unit_prefix: &str,
) -> Result<CaptionRun> {
    let client = ctx.client()?;
    let spec = ctx.model_spec();
    let n = ctx.config.captions.n_captions;
    run.prompt(SYSTEM.id);
    run.prompt(CAPTIONS_FROM_TAGS.id);
    let ks = ctx.config.retrieval.all_k();
    let mut units: BTreeMap<(String, Option<usize>), Vec<&RetrievalRecord>> = BTreeMap::new();
    for r in retrievals.iter().filter(|r| r.source != ATTACK_SOURCE) {
        units.entry((r.source.clone(), r.b)).or_default().push(r);
    }
    let mut work = Vec::new();
    for ((source, b), items) in &units {
        for &k in &ks {
            let unit = format!("{unit_prefix}{}/K={k}", unit_name(source, *b));
            for item in items {
                if item.tags.is_empty() {
                    run.exclude(&unit, &item.item_id, "empty retrieval");
                } else if item.tags.len() < k {
                    run.exclude(&unit, &item.item_id, format!("only {} retrieved tags", item.tags.len()));
                } else {
                    work.push((source.clone(), *b, k, *item));
                }
            }
        }
    }
    let outcomes: Vec<_> = work
        .par_iter()
        .map(|(source, b, k, item)| {
            let out = generate_captions_from_tags(&client, &spec, &item.tags[..*k], n);
            (source, *b, *k, *item, out)
        })
        .collect();
    let mut records = Vec::new();
    for (source, b, k, item, out) in outcomes {
        match settle(out)? {
            Ok(set) => records.push(CaptionRecord {
                source: source.clone(),
                b,
                k,
                item_id: item.item_id.clone(),
                prompt_id: set.exchange.prompt_id,
                request_hash: set.exchange.request_hash,
                captions: set.captions,
                raw: set.exchange.raw,
            }),
            Err(reason) => run.exclude(format!("{unit_prefix}{}/K={k}", unit_name(source, b)), &item.item_id, reason),
        }
    }
    records.sort_by(|a, b| (&a.source, a.b, a.k, &a.item_id).cmp(&(&b.source, b.b, b.k, &b.item_id)));

    let mut rows = Vec::new();
    for (source, b) in units.keys() {
        for &k in &ks {
            let hyps: Refs = records
                .iter()
                .filter(|r| &r.source == source && r.b == *b && r.k == k)
                .map(|r| (r.item_id.clone(), r.captions.clone()))
                .collect();
            let unit = format!("{unit_prefix}{}/K={k}", unit_name(source, *b));
            for tail in score_rows(run, &unit, &hyps, &[("C_gt", generated), ("C_h", human)])? {
                let mut row = vec![json!(source), b_cell(*b), json!(k)];
                row.extend(tail);
                rows.push(row);
            }
        }
    }
    Ok(CaptionRun { records, rows })
}

fn reference_captions(ctx: &Context, run: &mut StageRun<'_>) -> Result<(Option<Refs>, Option<Refs>)> {
    let data = &ctx.config.data;
    let human = match &data.captions {
        Some(p) => Some(caption_map(&run.input("data.captions", p)?, Some(CaptionSource::Human))?),
        None => None,
    };
    let generated = match &data.gt_captions {
        Some(p) => Some(caption_map(&run.input("data.gt_captions", p)?, None)?),
        None => None,
    };
    Ok((human, generated))
}

const CAPTION_COLUMNS: [&str; 7] = ["source", "b", "k", "reference", "metric", "value", "items"];

pub fn attack_captions(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("attack-captions");
    let path = ctx.existing_retrievals()?;
    run.input_path("retrievals", &path)?;
    if let Some(c) = &ctx.config.client.cache {
        if ctx.deterministic() {
            run.input("client.cache", c)?;
        }
    }
    let retrievals: Vec<RetrievalRecord> = read_jsonl(&path)?;
    let (human, generated) = reference_captions(ctx, &mut run)?;
    if human.is_none() && generated.is_none() {
        return Err(PipelineError::Config("attack-captions needs data.captions or data.gt_captions".into()));
    }
    let out = caption_attack_core(ctx, &mut run, &retrievals, human.as_ref(), generated.as_ref(), "")?;
    run.write_jsonl(CAPTIONS, &out.records)?;
    let mut table = Table::new("captions", &CAPTION_COLUMNS);
    out.rows.into_iter().for_each(|r| table.push(r));
    let mut summary = BTreeMap::new();
    summary.insert("n_captions".into(), json!(ctx.config.captions.n_captions));
    summary.insert("generated_items".into(), json!(out.records.len()));
    run.finish(summary, vec![table])
}

fn load_image(dir: &Path, item: &str) -> Result<Option<ImagePayload>> {
    for ext in ["png", "jpg", "jpeg"] {
        let p = dir.join(format!("{item}.{ext}"));
        if p.exists() {
            let bytes = std::fs::read(&p).map_err(|e| PipelineError::io(&p, e))?;
            return Ok(Some(ImagePayload::from_bytes(ImagePayload::media_type_for(&p), &bytes)));
        }
    }
    Ok(None)
}

fn scene_record(source: &str, b: Option<usize>, setting: &str, item: &str, x: SceneExtraction) -> SceneRecord {
    SceneRecord {
        source: source.to_owned(),
        b,
        setting: setting.to_owned(),
        item_id: item.to_owned(),
        scene: x.scene,
        dropped_predicates: x.dropped_predicates,
        malformed_items: x.malformed_items,
        request_hashes: x.exchanges.into_iter().map(|e| e.request_hash).collect(),
    }
}

/// Ablation subsets of {objects, relations, scenes}, singletons first.
pub const ABLATION_PARTS: [&str; 7] = [
    "objects",
    "relations",
    "scenes",
    "objects+relations",
    "objects+scenes",
    "relations+scenes",
    "objects+relations+scenes",
];

fn parts_of<'a>(name: &str, scene: &'a StructuredScene) -> SceneParts<'a> {
    let has = |p: &str| name.split('+').any(|x| x == p);
    SceneParts {
        objects: has("objects").then_some(&scene.objects),
        relations: has("relations").then_some(&scene.relations),
        scenes: has("scenes").then_some(scene.scenes.as_slice()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub source: String,
    pub b: Option<usize>,
    pub parts: String,
    pub item_id: String,
    pub request_hash: String,
    pub captions: Vec<String>,
    pub raw: String,
}

fn extract_all(
    client: &ChatClient,
    spec: &ModelSpec,
    jobs: Vec<(String, Option<usize>, String, String, SceneInputs)>,
    run: &StageRun<'_>,
) -> Result<Vec<SceneRecord>> {
    let outcomes: Vec<_> = jobs
        .into_par_iter()
        .map(|(source, b, setting, item, inputs)| {
            let out = extract_scene(client, spec, &inputs);
            (source, b, setting, item, out)
        })
        .collect();
    let mut out = Vec::new();
    for (source, b, setting, item, res) in outcomes {
        match settle(res)? {
            Ok(x) => out.push(scene_record(&source, b, &setting, &item, x)),
            Err(reason) => run.exclude(format!("{}/{setting}", unit_name(&source, b)), &item, reason),
        }
    }
    Ok(out)
}

pub fn attack_adaptive(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("attack-adaptive");
    let cfg = &ctx.config.adaptive;
    let k = ctx.config.retrieval.k;
    let client = ctx.client()?;
    let spec = ctx.model_spec();
    for p in [SYSTEM, SCENE_OBJECTS, SCENE_RELATIONS, SCENE_LABELS] {
        run.prompt(p.id);
    }
    if let Some(c) = &ctx.config.client.cache {
        if ctx.deterministic() {
            run.input("client.cache", c)?;
        }
    }
    let retrievals_path = ctx.existing_retrievals()?;
    run.input_path("retrievals", &retrievals_path)?;
    let retrievals: Vec<RetrievalRecord> = read_jsonl(&retrievals_path)?;
    let captions_path = ctx.out(CAPTIONS);
    if !captions_path.exists() {
        return Err(PipelineError::Config("no generated captions; run attack-captions first".into()));
    }
    run.input_path("captions", &captions_path)?;
    let captions: Vec<CaptionRecord> = read_jsonl(&captions_path)?;
    let (human, _) = reference_captions(ctx, &mut run)?;
    let images = match &ctx.config.data.images {
        Some(p) => Some(run.input("data.images", p)?),
        None => None,
    };
    let tags: HashMap<(&str, Option<usize>, &str), &[String]> = retrievals
        .iter()
        .filter(|r| r.tags.len() >= k)
        .map(|r| ((r.source.as_str(), r.b, r.item_id.as_str()), &r.tags[..k]))
        .collect();
    let mut units: BTreeMap<(String, Option<usize>), Vec<&CaptionRecord>> = BTreeMap::new();
    for c in captions.iter().filter(|c| c.k == k) {
        units.entry((c.source.clone(), c.b)).or_default().push(c);
    }
    let items: BTreeSet<&str> = units.values().flatten().map(|c| c.item_id.as_str()).collect();
    let mut image_cache = BTreeMap::new();
    if let Some(dir) = &images {
        for item in &items {
            if let Some(img) = load_image(dir, item)? {
                image_cache.insert(item.to_string(), img);
            }
        }
    }

    // reference scenes: given, or extracted from the human captions
    let mut references: BTreeMap<String, StructuredScene> = BTreeMap::new();
    let mut scene_records = Vec::new();
    if let Some(p) = &cfg.reference_scenes {
        let path = run.input("adaptive.reference_scenes", p)?;
        for r in read_jsonl::<ReferenceScene>(&path)? {
            references.insert(r.image_id, r.scene);
        }
    } else {
        let human = human
            .as_ref()
            .ok_or_else(|| PipelineError::Config("attack-adaptive needs adaptive.reference_scenes or data.captions".into()))?;
        let jobs = items
            .iter()
            .filter_map(|item| {
                let caps = human.get(*item);
                if caps.is_none() {
                    run.exclude("reference", *item, "no human captions");
                }
                caps.map(|c| {
                    let inputs = SceneInputs {
                        captions: Some(c.clone()),
                        ..Default::default()
                    };
                    ("reference".to_owned(), None, "captions".to_owned(), item.to_string(), inputs)
                })
            })
            .collect();
        for r in extract_all(&client, &spec, jobs, &run)? {
            references.insert(r.item_id.clone(), r.scene.clone());
            scene_records.push(r);
        }
    }

    let mut jobs = Vec::new();
    for ((source, b), caps) in &units {
        for setting in &cfg.settings {
            let name = setting_name(setting);
            for c in caps {
                let unit = format!("{}/{name}", unit_name(source, *b));
                if !references.contains_key(&c.item_id) {
                    run.exclude(&unit, &c.item_id, "no reference scene");
                    continue;
                }
                let mut inputs = SceneInputs::default();
                let mut missing = None;
                for ev in setting {
                    match ev {
                        Evidence::Tags => match tags.get(&(source.as_str(), *b, c.item_id.as_str())) {
                            Some(t) => inputs.tags = Some(t.to_vec()),
                            None => missing = Some("tags"),
                        },
                        Evidence::Captions => inputs.captions = Some(c.captions.clone()),
                        Evidence::Image => match image_cache.get(&c.item_id) {
                            Some(img) => inputs.image = Some(img.clone()),
                            None => missing = Some("image"),
                        },
                    }
                }
                match missing {
                    Some(m) => run.exclude(&unit, &c.item_id, format!("no {m} available")),
                    None => jobs.push((source.clone(), *b, name.clone(), c.item_id.clone(), inputs)),
                }
            }
        }
    }
    let predicted = extract_all(&client, &spec, jobs, &run)?;

    let mut structured = Table::new("structured", &["source", "b", "setting", "component", "precision", "recall", "f1", "items"]);
    let mut summary = BTreeMap::new();
    for (source, b) in units.keys() {
        for setting in &cfg.settings {
            let name = setting_name(setting);
            let preds: Vec<&SceneRecord> = predicted
                .iter()
                .filter(|r| &r.source == source && r.b == *b && r.setting == name)
                .collect();
            let mut sums = [[0.0f64; 3]; 5];
            for p in &preds {
                let f = structured_f1(&p.scene, &references[&p.item_id])?;
                for (acc, prf) in sums.iter_mut().zip([f.objects, f.triple, f.pair, f.predicate, f.scene]) {
                    acc[0] += prf.precision;
                    acc[1] += prf.recall;
                    acc[2] += prf.f1;
                }
            }
            let nn = preds.len();
            for (component, acc) in ["objects", "triple", "pair", "predicate", "scene"].iter().zip(sums) {
                let cell = |v: f64| if nn == 0 { Value::Null } else { json!(v / nn as f64) };
                structured.push(vec![
                    json!(source),
                    b_cell(*b),
                    json!(name),
                    json!(component),
                    cell(acc[0]),
                    cell(acc[1]),
                    cell(acc[2]),
                    json!(nn),
                ]);
            }
            let dropped: usize = preds.iter().map(|p| p.dropped_predicates).sum();
            summary.insert(format!("{}/{name}.dropped_predicates", unit_name(source, *b)), json!(dropped));
        }
    }

    let mut tables = vec![structured];
    if cfg.ablation {
        run.prompt(CAPTIONS_FROM_SCENE.id);
        let from = cfg.ablation_setting().expect("settings validated non-empty");
        if !cfg.settings.contains(from) {
            return Err(PipelineError::Config("adaptive.ablation_from must be one of adaptive.settings".into()));
        }
        let from_name = setting_name(from);
        summary.insert("ablation_from".into(), json!(from_name));
        let sources: Vec<&SceneRecord> = predicted.iter().filter(|r| r.setting == from_name).collect();
        let n = ctx.config.captions.n_captions;
        let outcomes: Vec<_> = sources
            .par_iter()
            .flat_map(|r| ABLATION_PARTS.par_iter().map(move |parts| (*r, *parts)))
            .map(|(r, parts)| (r, parts, generate_captions_from_scene(&client, &spec, parts_of(parts, &r.scene), n)))
            .collect();
        let mut ablation_records = Vec::new();
        for (r, parts, out) in outcomes {
            match settle(out)? {
                Ok(set) => ablation_records.push(AblationRecord {
                    source: r.source.clone(),
                    b: r.b,
                    parts: parts.to_owned(),
                    item_id: r.item_id.clone(),
                    request_hash: set.exchange.request_hash,
                    captions: set.captions,
                    raw: set.exchange.raw,
                }),
                Err(reason) => run.exclude(format!("{}/ablation/{parts}", unit_name(&r.source, r.b)), &r.item_id, reason),
            }
        }
        ablation_records.sort_by(|a, b| (&a.source, a.b, &a.parts, &a.item_id).cmp(&(&b.source, b.b, &b.parts, &b.item_id)));
        let mut ablation = Table::new("ablation", &["source", "b", "parts", "reference", "metric", "value", "items"]);
        for (source, b) in units.keys() {
            for parts in ABLATION_PARTS {
                let hyps: Refs = ablation_records
                    .iter()
                    .filter(|a| &a.source == source && a.b == *b && a.parts == parts)
                    .map(|a| (a.item_id.clone(), a.captions.clone()))
                    .collect();
                let unit = format!("{}/ablation/{parts}", unit_name(source, *b));
                for tail in score_rows(&run, &unit, &hyps, &[("C_h", human.as_ref())])? {
                    let mut row = vec![json!(source), b_cell(*b), json!(parts)];
                    row.extend(tail);
                    ablation.push(row);
                }
            }
        }
        run.write_jsonl("ablation_captions.jsonl", &ablation_records)?;
        tables.push(ablation);
    }

    scene_records.extend(predicted);
    scene_records.sort_by(|a, b| (&a.source, a.b, &a.setting, &a.item_id).cmp(&(&b.source, b.b, &b.setting, &b.item_id)));
    run.write_jsonl(SCENES, &scene_records)?;
    run.finish(summary, tables)
}

pub fn eval_cross_domain(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("eval-cross-domain");
    let domains = &ctx.config.cross_domain.domains;
    if domains.is_empty() {
        return Err(PipelineError::Config("eval-cross-domain needs cross_domain.domains".into()));
    }
    if let Some(c) = &ctx.config.client.cache {
        if ctx.deterministic() {
            run.input("client.cache", c)?;
        }
    }
    let mut columns = vec!["domain"];
    columns.extend(CAPTION_COLUMNS);
    let mut table = Table::new("captions", &columns);
    let mut summary = BTreeMap::new();
    for d in domains {
        let retrievals: Vec<RetrievalRecord> = read_jsonl(&run.input(&format!("cross_domain[{}].retrievals", d.label), &d.retrievals)?)?;
        let human = caption_map(&run.input(&format!("cross_domain[{}].captions", d.label), &d.captions)?, Some(CaptionSource::Human))?;
        let generated = match &d.gt_captions {
            Some(p) => Some(caption_map(&run.input(&format!("cross_domain[{}].gt_captions", d.label), p)?, None)?),
            None => None,
        };
        let out = caption_attack_core(ctx, &mut run, &retrievals, Some(&human), generated.as_ref(), &format!("{}/", d.label))?;
        run.write_jsonl(&format!("cross_domain/{}.captions.jsonl", d.label), &out.records)?;
        let k = ctx.config.retrieval.k;
        let mut rouge = Vec::new();
        for row in out.rows {
            if row[2] == json!(k) && row[3] == json!("C_h") && row[4] == json!(TextMetric::RougeL.name()) {
                if let Some(v) = row[5].as_f64() {
                    rouge.push(v);
                }
            }
            let mut full = vec![json!(d.label)];
            full.extend(row);
            table.push(full);
        }
        if !rouge.is_empty() {
            summary.insert(format!("{}.rougeL_vs_C_h_at_k", d.label), json!(rouge.iter().sum::<f64>() / rouge.len() as f64));
        }
    }
    run.finish(summary, vec![table])
}
