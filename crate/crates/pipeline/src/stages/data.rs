//! `ingest`, `align`, `retriever-train` and `retrieve`.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use slime_core::alignment::{alignment_cosine, apply_alignment, fit_alignment, AlignOptions, AlignmentMap};
use slime_core::retriever::{recall_at_k, train_projections, train_ranker, RetrievalIndex, TrainingSet};
use slime_core::store::{make_split, DatasetSplit};
use slime_core::{Embeddings, RetrieverModel, TagVocabulary};

use crate::context::{caption_map, Context, StageRun, RETRIEVALS, SPLIT};
use crate::error::{PipelineError, Result};
use crate::records::RetrievalRecord;
use crate::report::{Report, Table};
use crate::ATTACK_SOURCE;

/// Ids shared by the attack matrix and every victim, sorted, then split.
pub fn split_ids(ctx: &Context, attack: &Embeddings, victims: &[(String, Embeddings)]) -> Result<DatasetSplit> {
    let mut ids: BTreeSet<&String> = attack.ids().iter().collect();
    for (_, v) in victims {
        let vs: BTreeSet<&String> = v.ids().iter().collect();
        ids.retain(|id| vs.contains(id));
    }
    let ids: Vec<String> = ids.into_iter().cloned().collect();
    let s = &ctx.config.data.split;
    Ok(make_split(&ids, ctx.config.seed, s.val, s.test)?)
}

struct Spaces {
    attack: Embeddings,
    victims: Vec<(String, Embeddings)>,
    split: DatasetSplit,
}

fn load_spaces(ctx: &Context, run: &mut StageRun<'_>) -> Result<Spaces> {
    let attack = run.matrix_input("data.attack", ctx.require(&ctx.config.data.attack, "data.attack")?)?;
    let mut victims = Vec::new();
    for v in &ctx.config.data.victims {
        let m = run.matrix_input(&format!("data.victims[{}]", v.name), &v.embeddings)?;
        victims.push((v.name.clone(), m));
    }
    let split = split_ids(ctx, &attack, &victims)?;
    Ok(Spaces { attack, victims, split })
}

fn map_path(victim: &str, b: usize) -> String {
    format!("alignment/{victim}/b{b}.align")
}

pub fn ingest(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("ingest");
    let data = &ctx.config.data;
    let mut matrices = Table::new("matrices", &["name", "rows", "dim"]);
    let mut summary = BTreeMap::new();
    let mut split = None;
    if let Some(a) = &data.attack {
        let attack = run.matrix_input("data.attack", a)?;
        matrices.push(vec![json!(ATTACK_SOURCE), json!(attack.rows()), json!(attack.dim())]);
        let mut victims = Vec::new();
        for v in &data.victims {
            let m = run.matrix_input(&format!("data.victims[{}]", v.name), &v.embeddings)?;
            matrices.push(vec![json!(v.name), json!(m.rows()), json!(m.dim())]);
            victims.push((v.name.clone(), m));
        }
        let s = split_ids(ctx, &attack, &victims)?;
        summary.insert("shared_ids".into(), json!(s.train.len() + s.val.len() + s.test.len()));
        summary.insert("train".into(), json!(s.train.len()));
        summary.insert("val".into(), json!(s.val.len()));
        summary.insert("test".into(), json!(s.test.len()));
        run.write_json(SPLIT, &s)?;
        split = Some(s);
    }
    let vocab = match &data.tag_embeddings {
        Some(t) => {
            let m = run.matrix_input("data.tag_embeddings", t)?;
            matrices.push(vec![json!("tag_embeddings"), json!(m.rows()), json!(m.dim())]);
            Some(TagVocabulary::from_matrix(&m)?)
        }
        None => None,
    };
    if let Some(p) = &data.tags {
        run.input("data.tags", p)?;
        let records = ctx.load_tags()?;
        let total: usize = records.iter().map(|r| r.tags.len()).sum();
        summary.insert("tag_records".into(), json!(records.len()));
        summary.insert("mean_tags_per_image".into(), json!(total as f64 / records.len().max(1) as f64));
        if let Some(v) = &vocab {
            let known = records.iter().flat_map(|r| &r.tags).filter(|t| v.index_of(t).is_some()).count();
            summary.insert("tag_vocab_coverage".into(), json!(known as f64 / total.max(1) as f64));
        }
    }
    for (label, path) in [("data.captions", &data.captions), ("data.gt_captions", &data.gt_captions)] {
        if let Some(p) = path {
            let path = run.input(label, p)?;
            let caps = caption_map(&path, None)?;
            let n: usize = caps.values().map(Vec::len).sum();
            summary.insert(format!("{label}.images"), json!(caps.len()));
            summary.insert(format!("{label}.captions"), json!(n));
        }
    }
    if split.is_none() {
        run.warn("no data.attack configured; split not computed");
    }
    run.finish(summary, vec![matrices])
}

pub fn align(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("align");
    let sp = load_spaces(ctx, &mut run)?;
    if sp.victims.is_empty() {
        return Err(PipelineError::Config("align needs at least one entry in data.victims".into()));
    }
    if sp.split.test.is_empty() || sp.split.train.is_empty() {
        return Err(PipelineError::Config("align needs non-empty train and test splits".into()));
    }
    let cfg = &ctx.config.alignment;
    let opts = AlignOptions {
        solver: cfg.solver,
        ridge_lambda: cfg.ridge_lambda,
        ..Default::default()
    };
    let attack_test = sp.attack.select(&sp.split.test)?;
    let mut table = Table::new("cosine", &["victim", "b", "b_effective", "mean_cosine", "train_residual", "rank"]);
    let mut summary = BTreeMap::new();
    for (name, victim) in &sp.victims {
        let victim_test = victim.select(&sp.split.test)?;
        let mut curve = Vec::new();
        for &b in &cfg.b_sweep {
            let b_eff = b.min(sp.split.train.len());
            if b_eff < b {
                run.warn(format!("{name}: b={b} clipped to the {b_eff} available training rows"));
            }
            let ids = &sp.split.train[..b_eff];
            let map = fit_alignment(&victim.select(ids)?, &sp.attack.select(ids)?, &opts)?;
            let aligned = apply_alignment(&victim_test, &map, cfg.renormalize)?;
            let cos = alignment_cosine(&attack_test, &aligned)?;
            let rel = map_path(name, b);
            map.save(run.prepare(&rel)?)?;
            run.artifact(&rel)?;
            table.push(vec![
                json!(name),
                json!(b),
                json!(b_eff),
                json!(cos.mean),
                json!(map.meta.residual),
                map.meta.rank.map_or(Value::Null, Value::from),
            ]);
            curve.push(cos.mean);
        }
        let increasing = curve.windows(2).all(|w| w[1] > w[0]);
        summary.insert(format!("{name}.cosine_strictly_increasing"), json!(increasing));
    }
    run.finish(summary, vec![table])
}

fn training_sets(ctx: &Context, run: &mut StageRun<'_>, vocab: &TagVocabulary) -> Result<(TrainingSet<f64>, Option<TrainingSet<f64>>)> {
    let sp = load_spaces(ctx, run)?;
    run.input("data.tags", ctx.require(&ctx.config.data.tags, "data.tags")?)?;
    let records = ctx.load_tags()?;
    let train = TrainingSet::from_records(&sp.attack.select(&sp.split.train)?, &records, vocab)?;
    let val = if sp.split.val.is_empty() {
        None
    } else {
        Some(TrainingSet::from_records(&sp.attack.select(&sp.split.val)?, &records, vocab)?)
    };
    Ok((train, val))
}

pub fn checkpoint_rel(ctx: &Context) -> String {
    ctx.config.retrieval.checkpoint.clone().unwrap_or_else(|| "retriever".into())
}

pub fn retriever_train(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("retriever-train");
    run.input("data.tag_embeddings.path", &ctx.require(&ctx.config.data.tag_embeddings, "data.tag_embeddings")?.path)?;
    let vocab = ctx.load_vocab()?;
    let (train, val) = training_sets(ctx, &mut run, &vocab)?;
    if train.is_empty() {
        return Err(PipelineError::Input("no training items with known tags".into()));
    }
    let k = ctx.config.retrieval.k.min(vocab.len());
    let mut model = RetrieverModel::init(vocab.dim(), ctx.config.retriever.clone(), ctx.config.seed)?;
    let mut summary = BTreeMap::new();
    summary.insert("train_items".into(), json!(train.len()));
    summary.insert("vocab".into(), json!(vocab.len()));
    summary.insert("unreferenced_tags".into(), json!(train.unreferenced_tags(vocab.len()).len()));
    if let Some(v) = &val {
        summary.insert("val_items".into(), json!(v.len()));
        summary.insert(format!("val_recall_at_{k}_untrained"), json!(recall_at_k(&model, &vocab, v, k)?));
    }
    let logs = [train_projections(&mut model, &train, &vocab)?, train_ranker(&mut model, &train, &vocab)?];
    if let Some(v) = &val {
        summary.insert(format!("val_recall_at_{k}_trained"), json!(recall_at_k(&model, &vocab, v, k)?));
    }
    summary.insert("temperature".into(), json!(model.temperature()));
    let mut losses = Table::new("losses", &["stage", "initial_loss", "final_loss", "steps"]);
    let mut curve = Table::new("epochs", &["stage", "epoch", "mean_batch_loss"]);
    for log in &logs {
        losses.push(vec![json!(log.stage), json!(log.initial_loss), json!(log.final_loss), json!(log.steps)]);
        for (e, l) in log.epoch_losses.iter().enumerate() {
            curve.push(vec![json!(log.stage), json!(e + 1), json!(l)]);
        }
    }
    let rel = checkpoint_rel(ctx);
    model.save(run.prepare(&format!("{rel}/manifest.json"))?.parent().expect("dir"))?;
    run.artifact(&rel)?;
    run.finish(summary, vec![losses, curve])
}

pub fn retrieve(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("retrieve");
    let sp = load_spaces(ctx, &mut run)?;
    run.input("data.tag_embeddings.path", &ctx.require(&ctx.config.data.tag_embeddings, "data.tag_embeddings")?.path)?;
    let vocab = ctx.load_vocab()?;
    let ckpt = ctx.out(&checkpoint_rel(ctx));
    if !ckpt.join("manifest.json").exists() {
        return Err(PipelineError::Config(format!("no retriever checkpoint at {}; run retriever-train first", ckpt.display())));
    }
    run.input_path("retriever", &ckpt)?;
    let model = RetrieverModel::load(&ckpt)?;
    let index = RetrievalIndex::new(&model, &vocab)?;
    let want = ctx.config.retrieval.all_k().into_iter().max().unwrap_or(1);
    let k = want.min(vocab.len());
    if k < want {
        run.warn(format!("K={want} clipped to the vocabulary size {k}"));
    }
    let test = &sp.split.test;
    let mut records = Vec::new();
    let mut table = Table::new("retrievals", &["source", "b", "items", "k"]);
    let mut push = |source: &str, b: Option<usize>, m: &Embeddings, records: &mut Vec<RetrievalRecord>| -> Result<()> {
        let results = index.topk_batch(m.ids(), m.values(), k)?;
        table.push(vec![json!(source), crate::records::b_cell(b), json!(results.len()), json!(k)]);
        records.extend(results.into_iter().map(|r| RetrievalRecord {
            source: source.to_owned(),
            b,
            item_id: r.item_id,
            tags: r.topk.iter().map(|s| s.tag.clone()).collect(),
            scores: r.topk.iter().map(|s| s.score).collect(),
        }));
        Ok(())
    };
    push(ATTACK_SOURCE, None, &sp.attack.select(test)?, &mut records)?;
    for (name, victim) in &sp.victims {
        let victim_test = victim.select(test)?;
        for &b in &ctx.config.alignment.b_sweep {
            let rel = map_path(name, b);
            let path = ctx.out(&rel);
            if !path.exists() {
                return Err(PipelineError::Config(format!("missing alignment {rel}; run align first")));
            }
            run.input_path(&rel, &path)?;
            let map = AlignmentMap::load(&path)?;
            let aligned = apply_alignment(&victim_test, &map, ctx.config.alignment.renormalize)?;
            push(name, Some(b), &aligned, &mut records)?;
        }
    }
    records.sort_by(|a, b| (&a.source, a.b, &a.item_id).cmp(&(&b.source, b.b, &b.item_id)));
    run.write_jsonl(RETRIEVALS, &records)?;
    run.finish(BTreeMap::new(), vec![table])
}
