use std::sync::Arc;
use std::time::Duration;

use slime_clients::{
    extract_scene, generate_captions_from_tags, ChatClient, ChatRequest, ClientError, Endpoint, FailOnUseTransport, HttpResponse, Message, Mode,
    ModelSpec, RecordingSleeper, ReplayCache, RetryPolicy, SceneInputs, ScriptedTransport,
};

fn request(text: &str) -> ChatRequest {
    ChatRequest {
        provider: "stub".into(),
        model: "m".into(),
        messages: vec![Message::user(text)],
        max_tokens: 32,
        temperature: 0.0,
    }
}

fn endpoint() -> Endpoint {
    Endpoint {
        base_url: "http://stub.invalid/v1".into(),
        api_key: Some("k".into()),
    }
}

fn client(mode: Mode, transport: Arc<ScriptedTransport>, sleeper: Arc<RecordingSleeper>) -> ChatClient {
    ChatClient::new(mode, transport, Arc::new(ReplayCache::in_memory()))
        .with_endpoint("stub", endpoint())
        .with_sleeper(sleeper)
}

#[test]
fn retries_429_then_succeeds() {
    let t = Arc::new(ScriptedTransport::queue([HttpResponse::status(429), HttpResponse::completion("ok")]));
    let sleeper = Arc::new(RecordingSleeper::default());
    let c = client(Mode::Live, t.clone(), sleeper.clone());
    assert_eq!(c.chat(&request("hi")).unwrap(), "ok");
    assert_eq!(t.calls(), 2);
    assert_eq!(sleeper.delays().len(), 1);
    assert_eq!(c.stats().retries, 1);
}

#[test]
fn six_server_errors_exhaust_budget() {
    let t = Arc::new(ScriptedTransport::queue((0..7).map(|_| HttpResponse::status(500))));
    let sleeper = Arc::new(RecordingSleeper::default());
    let c = client(Mode::Live, t.clone(), sleeper.clone());
    match c.chat(&request("hi")) {
        Err(ClientError::Provider { status: 500, .. }) => {}
        other => panic!("expected provider error, got {other:?}"),
    }
    assert_eq!(t.calls(), 6);
    let delays = sleeper.delays();
    assert_eq!(delays.len(), 5);
    // exponential growth survives jitter: each nominal delay doubles
    for (i, d) in delays.iter().enumerate() {
        let nominal = 2f64.powi(i as i32);
        assert!(d.as_secs_f64() >= 0.5 * nominal && d.as_secs_f64() < 1.5 * nominal);
    }
}

#[test]
fn client_errors_are_not_retried() {
    let t = Arc::new(ScriptedTransport::queue([HttpResponse::status(400)]));
    let c = client(Mode::Live, t.clone(), Arc::new(RecordingSleeper::default()));
    assert!(matches!(c.chat(&request("hi")), Err(ClientError::Provider { status: 400, .. })));
    assert_eq!(t.calls(), 1);
}

#[test]
fn replay_miss_never_touches_network() {
    let t = Arc::new(FailOnUseTransport::default());
    let c = ChatClient::new(Mode::Replay, t.clone(), Arc::new(ReplayCache::in_memory())).with_endpoint("stub", endpoint());
    let req = request("unknown");
    match c.chat(&req) {
        Err(ClientError::CacheMiss(h)) => assert_eq!(h, req.hash()),
        other => panic!("{other:?}"),
    }
    assert_eq!(t.calls(), 0);
}

#[test]
fn record_twice_serves_cache() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let t = Arc::new(ScriptedTransport::from_fn(|_| HttpResponse::completion("1. A kitchen.\n2. A table.")));
    let c = ChatClient::new(Mode::Record, t.clone(), Arc::new(ReplayCache::open(&path).unwrap())).with_endpoint("stub", endpoint());
    let spec = ModelSpec::new("stub", "m");
    let first = generate_captions_from_tags(&c, &spec, &["kitchen table"], 2).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let second = generate_captions_from_tags(&c, &spec, &["kitchen table"], 2).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.exchange.raw.as_bytes(), second.exchange.raw.as_bytes());
    assert_eq!(t.calls(), 1);
    assert_eq!(c.stats().cache_hits, 1);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    // the recorded file replays offline
    let offline = Arc::new(FailOnUseTransport::default());
    let r = ChatClient::new(Mode::Replay, offline.clone(), Arc::new(ReplayCache::open(&path).unwrap()));
    assert_eq!(generate_captions_from_tags(&r, &spec, &["kitchen table"], 2).unwrap(), first);
    assert_eq!(offline.calls(), 0);
}

#[test]
fn empty_tags_rejected_before_network() {
    let t = Arc::new(FailOnUseTransport::default());
    let c = ChatClient::new(Mode::Live, t.clone(), Arc::new(ReplayCache::in_memory()));
    let spec = ModelSpec::new("stub", "m");
    assert!(matches!(
        generate_captions_from_tags::<&str>(&c, &spec, &[], 5),
        Err(ClientError::Precondition(_))
    ));
    assert!(matches!(extract_scene(&c, &spec, &SceneInputs::default()), Err(ClientError::NoInputs)));
    assert_eq!(t.calls(), 0);
}

#[test]
fn tags_embedded_verbatim_and_temperature_zero() {
    let t = Arc::new(ScriptedTransport::from_fn(|_| HttpResponse::completion("1. x")));
    let c = client(Mode::Live, t.clone(), Arc::new(RecordingSleeper::default()));
    let tags = ["kitchen table", "ktichen table"];
    generate_captions_from_tags(&c, &ModelSpec::new("stub", "m"), &tags, 1).unwrap();
    let body = &t.bodies()[0];
    assert_eq!(body["temperature"], 0.0);
    let prompt = body["messages"][1]["content"].as_str().unwrap();
    assert!(tags.iter().all(|tag| prompt.contains(tag)));
}

#[test]
fn wrong_item_count_is_parse_error_with_raw() {
    let t = Arc::new(ScriptedTransport::queue([HttpResponse::completion("1. only one")]));
    let c = client(Mode::Live, t, Arc::new(RecordingSleeper::default()));
    match generate_captions_from_tags(&c, &ModelSpec::new("stub", "m"), &["a"], 5) {
        Err(ClientError::Parse { raw, .. }) => assert_eq!(raw, "1. only one"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scene_extraction_filters_and_clamps() {
    let t = Arc::new(ScriptedTransport::queue([
        HttpResponse::completion(r#"{"objects": ["Tables", "chair", 7]}"#),
        HttpResponse::completion(
            r#"{"relations": [{"subject": "chair", "predicate": "beside", "object": "table"},
                              {"subject": "chairs", "predicate": "next_to", "object": "table"}]}"#,
        ),
        HttpResponse::completion(r#"```json
{"scenes": [{"label": "Kitchen", "confidence": 1.7}, {"label": "patio", "confidence": -2}]}
```"#),
    ]));
    let c = client(Mode::Live, t.clone(), Arc::new(RecordingSleeper::default()));
    let inputs = SceneInputs {
        captions: Some(vec!["A kitchen with a table and chairs.".into()]),
        ..Default::default()
    };
    let out = extract_scene(&c, &ModelSpec::new("stub", "m"), &inputs).unwrap();
    out.scene.validate().unwrap();
    assert_eq!(out.dropped_predicates, 1);
    assert_eq!(out.malformed_items, 1);
    assert!(out.scene.objects.contains("table") && out.scene.objects.contains("chair"));
    assert_eq!(out.scene.relations.len(), 1);
    assert_eq!(out.scene.scenes[0].label, "kitchen");
    assert_eq!(out.scene.scenes[0].confidence, 1.0);
    assert_eq!(out.scene.scenes[1].confidence, 0.0);
    assert_eq!(out.exchanges.len(), 3);
    // later stages see earlier output
    let relations_prompt = t.bodies()[1]["messages"][1]["content"].as_str().unwrap().to_owned();
    assert!(relations_prompt.contains("- table"));
}

#[test]
fn concurrency_is_bounded() {
    let t = Arc::new(ScriptedTransport::from_fn(|_| {
        std::thread::sleep(Duration::from_millis(10));
        HttpResponse::completion("ok")
    }));
    let c = Arc::new(client(Mode::Live, t, Arc::new(RecordingSleeper::default())).with_concurrency(3));
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let c = c.clone();
            std::thread::spawn(move || c.chat(&request(&format!("q{i}"))).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), "ok");
    }
    assert!(c.peak_in_flight() <= 3);
    assert!(c.peak_in_flight() >= 2);
}

#[test]
fn unknown_provider_without_env() {
    let t = Arc::new(ScriptedTransport::queue([]));
    let c = ChatClient::new(Mode::Live, t, Arc::new(ReplayCache::in_memory()));
    let mut req = request("x");
    req.provider = "no-such-provider-xyz".into();
    match c.chat(&req) {
        Err(ClientError::UnknownProvider(p, var)) => {
            assert_eq!(p, "no-such-provider-xyz");
            assert_eq!(var, "SLIME_BASE_URL_NO_SUCH_PROVIDER_XYZ");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn retry_policy_disabled_jitter_is_exact() {
    let t = Arc::new(ScriptedTransport::queue([HttpResponse::status(503), HttpResponse::status(503), HttpResponse::completion("ok")]));
    let sleeper = Arc::new(RecordingSleeper::default());
    let c = client(Mode::Live, t, sleeper.clone()).with_retry(RetryPolicy {
        jitter: false,
        ..Default::default()
    });
    c.chat(&request("x")).unwrap();
    assert_eq!(sleeper.delays(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
}
