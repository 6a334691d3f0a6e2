mod common;

use std::time::Instant;

use slime_core::synthetic::DualEncoderSpec;
use slime_pipeline::Verb;

#[test]
fn dual_encoder_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_dual_encoder(dir.path(), &DualEncoderSpec::default(), &[1, 10, 100, 1000]);
    let ctx = common::context(&cfg);
    let t = Instant::now();
    for verb in [Verb::Ingest, Verb::Align, Verb::RetrieverTrain, Verb::Retrieve, Verb::EvalNeighborhood, Verb::Report] {
        let r = verb.run(&ctx).unwrap();
        eprintln!("{} {:?}\n{}", r.name, t.elapsed(), r.to_markdown());
    }
}
