use slime_core::retriever::{
    recall_at_k, train_projections, train_ranker, DcnConfig, Parameters, RetrievalIndex, RetrieverConfig, RetrieverModel,
};
use slime_core::synthetic::{separable_fixture, SeparableFixture, SeparableSpec};

fn fixture_config() -> RetrieverConfig {
    RetrieverConfig {
        dcn: DcnConfig { cross_layers: 2, hidden: vec![64, 32] },
        ..Default::default()
    }
}

fn small_fixture() -> SeparableFixture {
    separable_fixture(&SeparableSpec { tags: 30, train: 80, val: 20, ..Default::default() }).unwrap()
}

#[test]
fn separable_fixture_learns() {
    let fx = separable_fixture(&SeparableSpec::default()).unwrap();
    let mut model = RetrieverModel::init(32, fixture_config(), 3).unwrap();
    let untrained = recall_at_k(&model, &fx.vocab, &fx.val, 10).unwrap();
    let c = train_projections(&mut model, &fx.train, &fx.vocab).unwrap();
    assert_eq!(c.epoch_losses.len(), 20);
    assert!(c.final_loss <= 0.5 * c.initial_loss, "{c:?}");
    let r = train_ranker(&mut model, &fx.train, &fx.vocab).unwrap();
    assert_eq!(r.epoch_losses.len(), 50);
    assert!(r.final_loss <= 0.1 * r.initial_loss, "{r:?}");
    let trained = recall_at_k(&model, &fx.vocab, &fx.val, 10).unwrap();
    assert!(untrained <= 0.3, "untrained recall {untrained}");
    assert!(trained >= 0.9, "trained recall {trained}");

    // top-|P| contains every true tag for most validation images
    let index = RetrievalIndex::new(&model, &fx.vocab).unwrap();
    let r = index.topk(&fx.val.ids()[0], fx.val.images().row(0), 10).unwrap();
    assert!(r.topk.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn training_is_deterministic() {
    let fx = small_fixture();
    let run = || {
        let mut cfg = fixture_config();
        cfg.contrastive.epochs = 3;
        cfg.ranker.epochs = 3;
        let mut model = RetrieverModel::init(32, cfg, 9).unwrap();
        let a = train_projections(&mut model, &fx.train, &fx.vocab).unwrap();
        let b = train_ranker(&mut model, &fx.train, &fx.vocab).unwrap();
        (model.flatten(), a, b)
    };
    let (p1, a1, b1) = run();
    let (p2, a2, b2) = run();
    assert!(p1.iter().zip(&p2).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let fx = small_fixture();
    let mut cfg = fixture_config();
    cfg.contrastive.epochs = 2;
    cfg.contrastive.sgd.learning_rate = 0.0;
    cfg.ranker.epochs = 2;
    cfg.ranker.sgd.learning_rate = 0.0;
    let mut model = RetrieverModel::init(32, cfg, 1).unwrap();
    let before = model.clone();
    let c = train_projections(&mut model, &fx.train, &fx.vocab).unwrap();
    let r = train_ranker(&mut model, &fx.train, &fx.vocab).unwrap();
    assert_eq!(model, before);
    assert_eq!(c.initial_loss, c.final_loss);
    assert_eq!(r.initial_loss, r.final_loss);
}

#[test]
fn zero_margin_reaches_zero_loss() {
    let fx = small_fixture();
    let mut cfg = fixture_config();
    cfg.contrastive.epochs = 10;
    cfg.ranker.epochs = 30;
    cfg.ranker.margin = 0.0;
    let mut model = RetrieverModel::init(32, cfg, 5).unwrap();
    train_projections(&mut model, &fx.train, &fx.vocab).unwrap();
    let r = train_ranker(&mut model, &fx.train, &fx.vocab).unwrap();
    assert_eq!(r.final_loss, 0.0, "{r:?}");
}

#[test]
fn batch_size_one_rejected() {
    let fx = small_fixture();
    let mut cfg = fixture_config();
    cfg.contrastive.batch_size = 1;
    let mut model = RetrieverModel::init(32, cfg, 5).unwrap();
    assert!(train_projections(&mut model, &fx.train, &fx.vocab).is_err());
}

#[test]
fn checkpoint_preserves_retrieval() {
    let fx = small_fixture();
    let mut cfg = fixture_config();
    cfg.contrastive.epochs = 2;
    cfg.ranker.epochs = 2;
    let mut model = RetrieverModel::<f64>::init(32, cfg, 2).unwrap();
    train_projections(&mut model, &fx.train, &fx.vocab).unwrap();
    train_ranker(&mut model, &fx.train, &fx.vocab).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let loaded = RetrieverModel::<f64>::load(dir.path()).unwrap();
    // f32 storage: compare against the model rounded the same way
    let mut rounded = model.clone();
    let flat: Vec<f64> = model.flatten().iter().map(|&v| v as f32 as f64).collect();
    rounded.load_flat(&flat);
    rounded.projections.log_temperature = model.projections.log_temperature;
    rounded.projections.image.gamma = model.projections.image.gamma;
    rounded.projections.tag.gamma = model.projections.tag.gamma;
    rounded.ranker.head_b = model.ranker.head_b;
    assert_eq!(loaded, rounded);
    let a = RetrievalIndex::new(&loaded, &fx.vocab).unwrap().topk_batch(fx.val.ids(), fx.val.images(), 5).unwrap();
    let b = RetrievalIndex::new(&rounded, &fx.vocab).unwrap().topk_batch(fx.val.ids(), fx.val.images(), 5).unwrap();
    assert_eq!(a, b);
}
