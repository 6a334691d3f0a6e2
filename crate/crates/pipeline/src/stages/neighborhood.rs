//! `eval-neighborhood`: semantic-neighborhood F1 of victim retrievals
//! against the attack model's own retrievals and against ground truth.

use std::collections::{BTreeMap, HashMap};

use serde_json::json;
use slime_core::metrics::{exact_retrieval_prf, NeighborhoodIndex, Prf};

use crate::context::{read_jsonl, Context};
use crate::error::Result;
use crate::records::{b_cell, RetrievalRecord};
use crate::report::{Report, Table};
use crate::ATTACK_SOURCE;

#[derive(Default, Clone, Copy)]
struct Acc {
    p: f64,
    r: f64,
    f: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, x: Prf) {
        self.p += x.precision;
        self.r += x.recall;
        self.f += x.f1;
        self.n += 1;
    }

    fn cells(&self) -> Vec<serde_json::Value> {
        let d = self.n.max(1) as f64;
        vec![json!(self.p / d), json!(self.r / d), json!(self.f / d), json!(self.n)]
    }
}

pub fn eval_neighborhood(ctx: &Context) -> Result<Report> {
    let mut run = ctx.stage("eval-neighborhood");
    let retrievals_path = ctx.existing_retrievals()?;
    run.input_path("retrievals", &retrievals_path)?;
    run.input("data.tag_embeddings.path", &ctx.require(&ctx.config.data.tag_embeddings, "data.tag_embeddings")?.path)?;
    run.input("data.tags", ctx.require(&ctx.config.data.tags, "data.tags")?)?;
    let vocab = ctx.load_vocab()?;
    let truth: HashMap<String, Vec<String>> = ctx
        .load_tags()?
        .into_iter()
        .map(|r| {
            let known: Vec<String> = r.tags.into_iter().filter(|t| vocab.index_of(t).is_some()).collect();
            (r.image_id, known)
        })
        .collect();
    let records: Vec<RetrievalRecord> = read_jsonl(&retrievals_path)?;
    let k = ctx.config.retrieval.k;
    let n = vocab.len();
    let ms = &ctx.config.retrieval.m_sweep;
    let ms_eff: Vec<usize> = ms.iter().map(|&m| m.min(n)).collect();
    if ms_eff.iter().zip(ms).any(|(a, b)| a != b) {
        run.warn(format!("m values above the vocabulary size {n} evaluated at m={n}"));
    }
    let attack: HashMap<&str, &RetrievalRecord> = records
        .iter()
        .filter(|r| r.source == ATTACK_SOURCE)
        .map(|r| (r.item_id.as_str(), r))
        .collect();
    let mut groups: BTreeMap<(String, Option<usize>), Vec<&RetrievalRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.source != ATTACK_SOURCE) {
        groups.entry((r.source.clone(), r.b)).or_default().push(r);
    }

    let index = NeighborhoodIndex::new(&vocab);
    let mut sweep = Table::new("neighborhood", &["source", "b", "reference", "m", "m_effective", "precision", "recall", "f1", "items"]);
    let mut exact = Table::new("exact", &["source", "b", "reference", "precision", "recall", "f1", "items"]);
    let mut summary = BTreeMap::new();
    for ((source, b), items) in &groups {
        let unit = format!("{source}/b={}", b.map_or("-".into(), |b| b.to_string()));
        let mut curves: BTreeMap<&str, (Vec<Acc>, Acc)> = BTreeMap::new();
        for item in items {
            if item.tags.len() < k {
                run.exclude(&unit, &item.item_id, format!("only {} retrieved tags for K={k}", item.tags.len()));
                continue;
            }
            let predicted = &item.tags[..k];
            let refs: [(&str, Option<Vec<String>>); 2] = [
                ("t_A", attack.get(item.item_id.as_str()).filter(|a| a.tags.len() >= k).map(|a| a.tags[..k].to_vec())),
                ("t_gt", truth.get(&item.item_id).filter(|t| !t.is_empty()).cloned()),
            ];
            for (name, reference) in refs {
                let Some(reference) = reference else {
                    run.exclude(format!("{unit}/{name}"), &item.item_id, "no reference tags");
                    continue;
                };
                let (curve, ex) = curves.entry(name).or_insert_with(|| (vec![Acc::default(); ms.len()], Acc::default()));
                for (acc, prf) in curve.iter_mut().zip(index.prf_sweep(&reference, predicted, &ms_eff)?) {
                    acc.add(prf);
                }
                ex.add(exact_retrieval_prf(&reference, predicted)?);
            }
        }
        for (name, (curve, ex)) in &curves {
            for ((m, m_eff), acc) in ms.iter().zip(&ms_eff).zip(curve) {
                let mut row = vec![json!(source), b_cell(*b), json!(name), json!(m), json!(m_eff)];
                row.extend(acc.cells());
                sweep.push(row);
            }
            let mut row = vec![json!(source), b_cell(*b), json!(name)];
            row.extend(ex.cells());
            exact.push(row);
        }
        if let (Some((a, _)), Some((g, _))) = (curves.get("t_A"), curves.get("t_gt")) {
            let ordered = a.iter().zip(g).all(|(a, g)| a.f / a.n.max(1) as f64 >= g.f / g.n.max(1) as f64);
            summary.insert(format!("{unit}.f1_t_A_ge_t_gt_all_m"), json!(ordered));
        }
    }
    summary.insert("k".into(), json!(k));
    run.finish(summary, vec![sweep, exact])
}
