//! `docket` command line: corpus generation, training, classification,
//! attack detection, drafting and evaluation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Bad arguments or configuration, detected before any output is written.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "docket",
    version,
    about = "Supporting-document classification and RFE response drafting"
)]
pub struct Cli {
    /// TOML file with defaults for any command; flags win over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus.
    GenCorpus(GenCorpusArgs),
    /// Train the image and text classifiers on a corpus.
    TrainDocs(TrainDocsArgs),
    /// Classify document directories or files.
    Classify(ClassifyArgs),
    /// Detect attack types in RFE text files.
    Detect(DetectArgs),
    /// Draft a response to an RFE.
    Draft(DraftArgs),
    /// Per-class accuracy of a trained model on a corpus.
    EvalDocs(EvalDocsArgs),
    /// Confusion counts and metrics of attack detection on a corpus.
    EvalAttacks(EvalAttacksArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Documents per class.
    #[arg(long, value_name = "N")]
    pub docs_per_class: Option<usize>,
    #[arg(long, value_name = "N")]
    pub rfes: Option<usize>,
    /// Per-character corruption rate of the OCR text channel, in [0, 1).
    #[arg(long, value_name = "RATE")]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainDocsArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Output model directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Text channel: clean or degraded.
    #[arg(long, value_name = "CHANNEL")]
    pub channel: Option<String>,
    #[arg(long, value_name = "F")]
    pub test_fraction: Option<f64>,
    #[arg(long, value_name = "N")]
    pub split_seed: Option<u64>,
    /// Train on every document and hold nothing out.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Move each input into DEST/<predicted class>/.
    #[arg(long = "move", value_name = "DEST")]
    pub move_to: Option<PathBuf>,
    /// Document directories, `.pgm` pages or `.txt` files.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, value_name = "FILE")]
    pub bank: PathBuf,
    /// Similarity threshold in [0, 1]; default 0.6.
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<f64>,
    #[arg(required = true, value_name = "RFE")]
    pub rfes: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DraftArgs {
    /// Take bank, store, templates and patterns from a generated corpus.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub bank: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub patterns: Option<PathBuf>,
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<f64>,
    /// Response date (YYYY-MM-DD); defaults to the RFE's notice date.
    #[arg(long, value_name = "DATE")]
    pub today: Option<String>,
    /// Where to write the draft text.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the draft's JSON manifest here.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(value_name = "RFE")]
    pub rfe: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalDocsArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Evaluate every document instead of the held-out split.
    #[arg(long)]
    pub all: bool,
    /// Write the tables as JSON here.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalAttacksArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Bank file; defaults to the corpus bank.
    #[arg(long, value_name = "FILE")]
    pub bank: Option<PathBuf>,
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<f64>,
    /// Attack id to score; default specialty_occupation.
    #[arg(long, value_name = "ID")]
    pub attack: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
