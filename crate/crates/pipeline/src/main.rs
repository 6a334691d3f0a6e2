use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slime_clients::Mode;
use slime_pipeline::{Context, ExperimentConfig, PipelineError, Verb};

#[derive(Parser)]
#[command(name = "slime", version, about = "Semantic leakage experiments over image embeddings")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
    /// Experiment config (JSON, `${VAR}` interpolated).
    #[arg(long, global = true, default_value = "slime.json")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Client mode; overrides `client.mode` in the config.
    #[arg(long, global = true, value_parser = ["live", "record", "replay"])]
    mode: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate inputs and write the dataset split.
    Ingest,
    /// Fit victim→attack alignments over the b-sweep.
    Align,
    /// Train the tag retriever on attack-space embeddings.
    RetrieverTrain,
    /// Retrieve top-K tags for attack and aligned victim embeddings.
    Retrieve,
    /// Semantic-neighborhood F1 over the m-sweep.
    EvalNeighborhood,
    /// Generate captions from retrieved tags and score them.
    AttackCaptions,
    /// Staged scene extraction, structured F1 and the caption ablation.
    AttackAdaptive,
    /// Caption attack partitioned by domain.
    EvalCrossDomain,
    /// Index every stage report.
    Report,
}

impl From<Command> for Verb {
    fn from(c: Command) -> Self {
        match c {
            Command::Ingest => Verb::Ingest,
            Command::Align => Verb::Align,
            Command::RetrieverTrain => Verb::RetrieverTrain,
            Command::Retrieve => Verb::Retrieve,
            Command::EvalNeighborhood => Verb::EvalNeighborhood,
            Command::AttackCaptions => Verb::AttackCaptions,
            Command::AttackAdaptive => Verb::AttackAdaptive,
            Command::EvalCrossDomain => Verb::EvalCrossDomain,
            Command::Report => Verb::Report,
        }
    }
}

fn run(cli: &Cli) -> Result<String, PipelineError> {
    let mut loaded = ExperimentConfig::load(&cli.config)?;
    if let Some(m) = &cli.mode {
        loaded.config.client.mode = m.parse::<Mode>()?;
        loaded.config.validate(&loaded.base_dir)?;
    }
    let ctx = Context::new(loaded, cli.out.clone());
    let report = Verb::from(cli.verb).run(&ctx)?;
    Ok(format!("{} -> {}", report.name, ctx.out("reports").display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
