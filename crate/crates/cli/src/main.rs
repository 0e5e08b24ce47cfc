//! `wordspot`: synthetic-data word spotting pipeline driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use wordspot_core::confidence::ConfidenceMeasure;
use wordspot_core::spotting::Protocol;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpotMode {
    Qbe,
    Qbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Qbe,
    Qbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    Sigmoid,
    Entropy,
    McDropout,
    Oracle,
    Random,
}

impl From<MeasureArg> for ConfidenceMeasure {
    fn from(arg: MeasureArg) -> Self {
        match arg {
            MeasureArg::Sigmoid => ConfidenceMeasure::Sigmoid,
            MeasureArg::Entropy => ConfidenceMeasure::Entropy,
            MeasureArg::McDropout => ConfidenceMeasure::McDropout,
            MeasureArg::Oracle => ConfidenceMeasure::Oracle,
            MeasureArg::Random => ConfidenceMeasure::Random,
        }
    }
}

#[derive(Parser)]
#[command(name = "wordspot", about = "Annotation-free segmentation-based word spotting")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renders a synthetic word-image corpus with a manifest.
    Synth,
    /// Trains the attribute estimator on a labeled manifest.
    Train {
        /// Continues from an existing model file instead of initializing.
        #[arg(long)]
        resume_from: Option<PathBuf>,
    },
    /// Runs confidence-gated self-training cycles on the target corpus.
    Adapt {
        /// Overrides the configured confidence measure.
        #[arg(long)]
        confidence: Option<MeasureArg>,
    },
    /// Ranks the evaluation gallery against one query.
    Spot {
        #[arg(long)]
        mode: SpotMode,
        /// Query string (qbs) or query image path (qbe).
        #[arg(long)]
        query: String,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Recognizes a single word image against the lexicon.
    Recognize {
        #[arg(long)]
        image: PathBuf,
    },
    /// Scores retrieval over the evaluation manifest by mean average
    /// precision.
    Eval {
        #[arg(long)]
        protocol: ProtocolArg,
        /// Stopwords: excluded as queries, kept as distractors.
        #[arg(long, value_delimiter = ',')]
        stopwords: Vec<String>,
    },
    /// Writes per-image confidence scores, optionally with pseudo-labels
    /// and correctness flags.
    ConfidenceReport {
        /// Measures to include.
        #[arg(long, value_delimiter = ',', default_values = ["sigmoid", "entropy"])]
        measures: Vec<MeasureArg>,
    },
    /// Writes a config file with every default filled in.
    InitConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = || -> Result<PathBuf, CliError> {
        cli.out
            .clone()
            .ok_or_else(|| CliError::Usage("this command needs --out <dir>".into()))
    };
    match cli.command {
        Command::Synth => commands::cmd_synth(&config, &out()?),
        Command::Train { resume_from } => commands::cmd_train(&config, &out()?, resume_from.as_deref()),
        Command::Adapt { confidence } => {
            commands::cmd_adapt(&config, &out()?, confidence.map(Into::into))
        }
        Command::Spot { mode, query, top_k } => commands::cmd_spot(&config, mode, &query, top_k),
        Command::Recognize { image } => commands::cmd_recognize(&config, &image),
        Command::Eval { protocol, stopwords } => {
            let protocol = match protocol {
                ProtocolArg::Qbe => Protocol::Qbe,
                ProtocolArg::Qbs => Protocol::Qbs,
            };
            commands::cmd_eval(&config, &out()?, protocol, &stopwords)
        }
        Command::ConfidenceReport { measures } => {
            let measures: Vec<ConfidenceMeasure> = measures.into_iter().map(Into::into).collect();
            commands::cmd_confidence_report(&config, &out()?, &measures)
        }
        Command::InitConfig => commands::cmd_init_config(&out()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
