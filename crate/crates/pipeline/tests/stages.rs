mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use slime_clients::{Endpoint, HttpResponse, ScriptedTransport};
use slime_core::synthetic::DualEncoderSpec;
use slime_pipeline::{Context, ExperimentConfig, PipelineError, Report, Verb};

/// Captioner that writes each caption around one or two of the tags.
fn tag_captioner(body: &Value) -> HttpResponse {
    let prompt = body["messages"][1]["content"].as_str().unwrap();
    let tags: Vec<&str> = prompt.lines().filter_map(|l| l.strip_prefix("- ")).collect();
    let lines: Vec<String> = (0..5)
        .map(|i| format!("{}. A photo of a {} and a {}.", i + 1, tags[i % tags.len()], tags[(i + 1) % tags.len()]))
        .collect();
    HttpResponse::completion(&lines.join("\n"))
}

fn scripted(ctx: Context) -> Context {
    ctx.with_transport(Arc::new(ScriptedTransport::from_fn(tag_captioner))).with_endpoint(Endpoint {
        base_url: "http://scripted.invalid".into(),
        api_key: None,
    })
}

fn write_lines(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| r.to_string() + "\n").collect();
    fs::write(path, text).unwrap();
}

const ITEMS: [(&str, [&str; 3], &str); 4] = [
    ("a", ["red bus", "city street", "traffic light"], "A red bus drives down a city street past a traffic light."),
    ("b", ["wooden table", "black chair", "kitchen area"], "A wooden table and a black chair in the kitchen area."),
    ("c", ["brown dog", "green grass", "frisbee"], "A brown dog catches a frisbee on the green grass."),
    ("d", ["snowy mountain", "ski slope", "skier"], "A skier comes down the ski slope of a snowy mountain."),
];

/// Retrievals whose tags match the captions (`on_topic`) or are taken from
/// another item.
fn write_domain(dir: &Path, label: &str, on_topic: bool) {
    let rows: Vec<Value> = ITEMS
        .iter()
        .enumerate()
        .map(|(i, (id, tags, _))| {
            let tags = if on_topic { tags } else { &ITEMS[(i + 2) % ITEMS.len()].1 };
            json!({"source": "victim", "b": 100, "item_id": id, "tags": tags})
        })
        .collect();
    write_lines(&dir.join(format!("{label}.retrievals.jsonl")), &rows);
    let caps: Vec<Value> = ITEMS.iter().map(|(id, _, c)| json!({"image_id": id, "captions": [c]})).collect();
    write_lines(&dir.join(format!("{label}.captions.jsonl")), &caps);
}

fn cross_domain_config(dir: &Path, out_on_topic: bool) -> std::path::PathBuf {
    write_domain(dir, "near", true);
    write_domain(dir, "out", out_on_topic);
    common::write_config(
        dir,
        &json!({
            "retrieval": {"k": 3, "k_sweep": [3]},
            "client": {"mode": "live", "provider": "scripted"},
            "cross_domain": {"domains": [
                {"label": "near", "retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"},
                {"label": "out", "retrievals": "out.retrievals.jsonl", "captions": "out.captions.jsonl"}
            ]}
        }),
    )
}

fn rows_for(r: &Report, domain: &str) -> Vec<Vec<Value>> {
    r.table("captions").unwrap().rows.iter().filter(|row| row[0] == domain).map(|row| row[1..].to_vec()).collect()
}

#[test]
fn identical_domains_score_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = scripted(common::context(&cross_domain_config(dir.path(), true)));
    let r = Verb::EvalCrossDomain.run(&ctx).unwrap();
    let near = rows_for(&r, "near");
    assert_eq!(near.len(), 5);
    assert_eq!(near, rows_for(&r, "out"));
    assert_eq!(r.summary["near.rougeL_vs_C_h_at_k"], r.summary["out.rougeL_vs_C_h_at_k"]);
}

#[test]
fn drifted_domain_scores_lower() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = scripted(common::context(&cross_domain_config(dir.path(), false)));
    let r = Verb::EvalCrossDomain.run(&ctx).unwrap();
    let near = r.summary["near.rougeL_vs_C_h_at_k"].as_f64().unwrap();
    let out = r.summary["out.rougeL_vs_C_h_at_k"].as_f64().unwrap();
    assert!(out <= near, "out {out} > near {near}");
    assert!(out < near);
}

#[test]
fn unlabelled_domains_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_domain(dir.path(), "near", true);
    for domains in [
        json!([{"label": "", "retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"}]),
        json!([{"retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"}]),
        json!([
            {"label": "x", "retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"},
            {"label": "x", "retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"}
        ]),
    ] {
        let cfg = common::write_config(dir.path(), &json!({"client": {"mode": "live"}, "cross_domain": {"domains": domains}}));
        let err = ExperimentConfig::load(&cfg).unwrap_err();
        assert!(matches!(err, PipelineError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn empty_conditioning_set_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for settings in [json!([[]]), json!([])] {
        let cfg = common::write_config(dir.path(), &json!({"client": {"mode": "live"}, "adaptive": {"settings": settings}}));
        assert!(matches!(ExperimentConfig::load(&cfg), Err(PipelineError::Config(_))));
    }
}

#[test]
fn input_order_does_not_change_outputs() {
    let run = |reverse: bool| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cross_domain_config(dir.path(), true);
        let path = dir.path().join("near.retrievals.jsonl");
        let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(str::to_owned).collect();
        if reverse {
            lines.reverse();
            lines.rotate_left(1);
        }
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
        v["data"] = json!({"retrievals": "near.retrievals.jsonl", "captions": "near.captions.jsonl"});
        common::write_config(dir.path(), &v);
        let ctx = scripted(common::context(&cfg));
        let r = Verb::AttackCaptions.run(&ctx).unwrap();
        (r.tables, fs::read(ctx.out("captions.jsonl")).unwrap())
    };
    assert_eq!(run(false), run(true));
}

fn align_report(spec: &DualEncoderSpec, b_sweep: &[usize], self_aligned: bool) -> Report {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_dual_encoder(dir.path(), spec, b_sweep);
    if self_aligned {
        fs::copy(dir.path().join("attack.emb"), dir.path().join("victim.emb")).unwrap();
        fs::copy(dir.path().join("attack.ids"), dir.path().join("victim.ids")).unwrap();
    }
    let ctx = common::context(&cfg);
    Verb::Ingest.run(&ctx).unwrap();
    Verb::Align.run(&ctx).unwrap()
}

#[test]
fn alignment_sweep_clips_b_and_improves() {
    let spec = DualEncoderSpec {
        items: 900,
        ..Default::default()
    };
    // 900 items minus 100 val and 500 test leaves 300 training rows
    let r = align_report(&spec, &[1, 10, 100, 5000], false);
    let t = r.table("cosine").unwrap();
    let col = t.column("b_effective").unwrap();
    assert_eq!(t.rows.iter().map(|r| r[col].clone()).collect::<Vec<_>>(), vec![json!(1), json!(10), json!(100), json!(300)]);
    assert_eq!(r.manifest.warnings.len(), 1);
    assert_eq!(r.summary["victim.cosine_strictly_increasing"], true);
}

#[test]
fn self_alignment_is_near_perfect() {
    let spec = DualEncoderSpec {
        items: 900,
        ..Default::default()
    };
    let r = align_report(&spec, &[300], true);
    let cos = r.table("cosine").unwrap().rows[0][3].as_f64().unwrap();
    assert!(cos >= 0.999, "{cos}");
}

#[test]
fn stages_out_of_order_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_dual_encoder(dir.path(), &DualEncoderSpec { items: 700, ..Default::default() }, &[10]);
    let ctx = common::context(&cfg);
    for verb in [Verb::Retrieve, Verb::AttackCaptions, Verb::AttackAdaptive] {
        let err = verb.run(&ctx).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{verb:?}: {err}");
    }
}

#[test]
fn replay_without_cache_entries_fails_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = cross_domain_config(dir.path(), true);
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    fs::write(dir.path().join("cache.jsonl"), "").unwrap();
    v["client"] = json!({"mode": "replay", "cache": "cache.jsonl", "provider": "scripted"});
    common::write_config(dir.path(), &v);
    let err = Verb::EvalCrossDomain.run(&common::context(&cfg_path)).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}
