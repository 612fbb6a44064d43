//! `fieldcast` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 stage failure, 3 missing
//! replay fixture.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldcast_core::pipeline::{Overrides, Pipeline, PipelineConfig, PipelineError, Stage};
use fieldcast_core::predictor::Strategy;

#[derive(Parser)]
#[command(name = "fieldcast", version, about = "Predict field-experiment conclusions with language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus and apply the keyword filter.
    Ingest(Opts),
    /// Two-layer model verification plus manual checks.
    Verify(Opts),
    /// Extract experiment settings and conclusions.
    Extract(Opts),
    /// Generate reversed and unrelated variants.
    Variants(Opts),
    /// Run repeated multiple-choice prediction.
    Predict(Opts),
    /// Label topics, sentiment and gender favorability.
    Annotate(Opts),
    /// Accuracy statistics and regression per model and strategy.
    Analyze(Opts),
    /// Write CSV and markdown reports.
    Report(Opts),
    /// Run every stage in order.
    RunAll(Opts),
}

#[derive(Args)]
struct Opts {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Restrict prediction to a single model.
    #[arg(long)]
    model: Option<String>,
    /// Keep completed stages whose outputs are unchanged (run-all only).
    #[arg(long)]
    resume: bool,
    /// Record every model exchange to this fixture file.
    #[arg(long)]
    record: Option<PathBuf>,
}

fn run(stage: Option<Stage>, opts: Opts) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(&opts.config)?;
    cfg.apply(&Overrides {
        corpus: opts.corpus,
        fixtures: opts.fixtures,
        output_dir: opts.output_dir,
        seed: opts.seed,
        repeats: opts.repeats,
        strategy: opts.strategy,
        model: opts.model,
    });
    let mut pipeline = Pipeline::new(cfg)?;
    if let Some(path) = opts.record {
        pipeline = pipeline.record_to(path);
    }
    let result = match stage {
        Some(s) => pipeline.run_stage(s),
        None => pipeline.run_all(opts.resume),
    };
    let recorded = pipeline.write_recording();
    result?;
    recorded?;
    println!("{}", pipeline.run_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, opts) = match cli.command {
        Command::Ingest(o) => (Some(Stage::Ingest), o),
        Command::Verify(o) => (Some(Stage::Verify), o),
        Command::Extract(o) => (Some(Stage::Extract), o),
        Command::Variants(o) => (Some(Stage::Variants), o),
        Command::Predict(o) => (Some(Stage::Predict), o),
        Command::Annotate(o) => (Some(Stage::Annotate), o),
        Command::Analyze(o) => (Some(Stage::Analyze), o),
        Command::Report(o) => (Some(Stage::Report), o),
        Command::RunAll(o) => (None, o),
    };
    match run(stage, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
