//! Command-line front end: `adlink <subcommand>` over a run directory.

pub mod commands;
pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use run::{Manifest, RunDir};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "adlink", version, about = "Link short advertisement texts by authorship")]
struct Cli {
    /// Run configuration (TOML). Defaults to the run directory's resolved
    /// config when present, else built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory all outputs are written to.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    run_dir: PathBuf,
    /// Override one config value, e.g. `--set pretrain.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic ad corpus.
    Synth,
    /// Validate and import an ads JSONL file.
    Ingest { path: Option<PathBuf> },
    /// Train the WordPiece vocabulary.
    TrainTokenizer,
    /// Fit emoji-word and WordPiece TF-IDF models.
    FitTfidf,
    /// Masked-language-model pre-training, one checkpoint per epoch.
    Pretrain,
    /// Triplet fine-tuning of the pre-trained encoder.
    Finetune {
        /// Also fine-tune and evaluate every pre-training checkpoint.
        #[arg(long)]
        from_each_checkpoint: bool,
    },
    /// Build component labels, triplets and verification pairs.
    MakeDatasets,
    /// Train pair classifiers for every dense/sparse model combination.
    TrainVerifier,
    /// Score the classifiers and the random baseline on the test pairs.
    Evaluate,
    /// Threshold sweep over the giant component.
    Decompose {
        /// Comma-separated thresholds, e.g. `0.1,0.5,0.9`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Nearest-neighbour report over token embeddings.
    Lexicon {
        #[arg(long = "query")]
        queries: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Length distribution and a JSON summary of the run.
    Report,
    /// Run every step from `synth` (or `ingest` when `ads` is set) to `report`.
    Pipeline,
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let resolved = cli.run_dir.join(run::RESOLVED_CONFIG);
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if resolved.exists() => RunConfig::load(&resolved)?,
        None => RunConfig::default(),
    };
    base.with_overrides(&cli.overrides)
}

fn step(run: &RunDir, name: &str, f: impl FnOnce(&RunDir) -> Result<commands::Outputs>) -> Result<()> {
    log::info!("running {name}");
    let outputs = f(run)?;
    run.record(name, &outputs)
}

fn execute(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    let run = RunDir::open(&cli.run_dir, config)?;
    match cli.command {
        Command::Synth => step(&run, "synth", commands::synth),
        Command::Ingest { path } => step(&run, "ingest", |r| commands::ingest(r, path.as_deref())),
        Command::TrainTokenizer => step(&run, "train-tokenizer", commands::train_tokenizer),
        Command::FitTfidf => step(&run, "fit-tfidf", commands::fit_tfidf_models),
        Command::Pretrain => step(&run, "pretrain", commands::pretrain_step),
        Command::Finetune { from_each_checkpoint } => {
            step(&run, "finetune", |r| commands::finetune_step(r, from_each_checkpoint))
        }
        Command::MakeDatasets => step(&run, "make-datasets", commands::make_datasets),
        Command::TrainVerifier => step(&run, "train-verifier", commands::train_verifier),
        Command::Evaluate => step(&run, "evaluate", commands::evaluate_step),
        Command::Decompose { grid } => step(&run, "decompose", |r| commands::decompose(r, grid)),
        Command::Lexicon { queries, k } => step(&run, "lexicon", |r| commands::lexicon(r, &queries, k)),
        Command::Report => step(&run, "report", commands::report),
        Command::Pipeline => {
            if run.config.ads.is_some() {
                step(&run, "ingest", |r| commands::ingest(r, None))?;
            } else {
                step(&run, "synth", commands::synth)?;
            }
            step(&run, "train-tokenizer", commands::train_tokenizer)?;
            step(&run, "fit-tfidf", commands::fit_tfidf_models)?;
            step(&run, "pretrain", commands::pretrain_step)?;
            step(&run, "make-datasets", commands::make_datasets)?;
            step(&run, "finetune", |r| commands::finetune_step(r, false))?;
            step(&run, "train-verifier", commands::train_verifier)?;
            step(&run, "evaluate", commands::evaluate_step)?;
            step(&run, "decompose", |r| commands::decompose(r, None))?;
            step(&run, "lexicon", |r| commands::lexicon(r, &[], None))?;
            step(&run, "report", commands::report)
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_unknown_subcommand() {
        assert_eq!(dispatch(["adlink", "--help"]), 0);
        assert_eq!(dispatch(["adlink", "frobnicate"]), 1);
        assert_eq!(dispatch(["adlink", "decompose", "--grid", "x"]), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(
            exit_code(&Error::Schema {
                line: 1,
                message: "x".into()
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::NonFiniteLoss {
                epoch: 1,
                batch: 0,
                loss: f64::NAN
            }),
            3
        );
    }
}
