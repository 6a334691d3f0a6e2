//! Experiment orchestration: each CLI verb is a stage that reads the
//! config, writes artifacts under the output directory and emits a report
//! carrying its run manifest.

pub mod config;
pub mod context;
pub mod error;
pub mod manifest;
pub mod records;
pub mod report;
pub mod stages;

pub use config::{ExperimentConfig, LoadedConfig};
pub use context::Context;
pub use error::{PipelineError, Result};
pub use manifest::RunManifest;
pub use report::{Report, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Source name of the attack model's own retrievals.
pub const ATTACK_SOURCE: &str = "attack";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Ingest,
    Align,
    RetrieverTrain,
    Retrieve,
    EvalNeighborhood,
    AttackCaptions,
    AttackAdaptive,
    EvalCrossDomain,
    Report,
}

impl Verb {
    pub fn run(self, ctx: &Context) -> Result<Report> {
        match self {
            Verb::Ingest => stages::ingest(ctx),
            Verb::Align => stages::align(ctx),
            Verb::RetrieverTrain => stages::retriever_train(ctx),
            Verb::Retrieve => stages::retrieve(ctx),
            Verb::EvalNeighborhood => stages::eval_neighborhood(ctx),
            Verb::AttackCaptions => stages::attack_captions(ctx),
            Verb::AttackAdaptive => stages::attack_adaptive(ctx),
            Verb::EvalCrossDomain => stages::eval_cross_domain(ctx),
            Verb::Report => stages::report(ctx),
        }
    }
}
