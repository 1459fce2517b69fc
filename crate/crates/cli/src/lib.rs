//! `georeason` command-line front end. [`run`] parses arguments, executes
//! one pipeline stage and returns the process exit code.

mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::RunConfig;
pub use manifest::Manifest;

/// Usage errors exit with 2, runtime failures with 1.
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "georeason", version, about = "Geospatially grounded encoder pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts and manifests.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Disables one model component; repeatable.
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<Ablate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Ablate {
    Contrastive,
    Mlm,
    Spatial,
    Summarizer,
}

impl Ablate {
    pub fn name(self) -> &'static str {
        match self {
            Ablate::Contrastive => "contrastive",
            Ablate::Mlm => "mlm",
            Ablate::Spatial => "spatial",
            Ablate::Summarizer => "summarizer",
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Annotates the corpus and writes pseudo-sentences, descriptions and vocabulary.
    BuildCorpus {
        /// Generates a seeded synthetic world under <out>/world first.
        #[arg(long)]
        synthetic: bool,
    },
    /// Regenerates descriptions through the remote summarizer (template fallback).
    Summarize,
    /// Contrastive + MLM pretraining from the built corpus.
    Pretrain,
    /// Fine-tunes the recognition head on the annotated paragraphs.
    FinetuneRec,
    /// Fine-tunes the typing head on the typing records.
    FinetuneType,
    /// Encodes every gazetteer entity into the linking index.
    BuildIndex,
    /// Links one mention in a text against the index.
    Link {
        #[arg(long)]
        text: String,
        /// Surface form of the mention; its first occurrence is linked.
        #[arg(long)]
        mention: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Writes the metric report for every trained artifact.
    Eval {
        /// Adds R@k for this k to the configured list.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Runs the whole synthetic pipeline and prints the metric report.
    Demo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildCorpus { .. } => "build-corpus",
            Command::Summarize => "summarize",
            Command::Pretrain => "pretrain",
            Command::FinetuneRec => "finetune-rec",
            Command::FinetuneType => "finetune-type",
            Command::BuildIndex => "build-index",
            Command::Link { .. } => "link",
            Command::Eval { .. } => "eval",
            Command::Demo => "demo",
        }
    }
}

/// A runtime failure, reported as one JSON line on standard error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    #[serde(rename = "error")]
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<georeason_core::Error> for Failure {
    fn from(e: georeason_core::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

/// Runs with process stdout/stderr. `argv` excludes the program name.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = std::iter::once(std::ffi::OsString::from("georeason")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::execute(&cli, stdout) {
        Ok(()) => 0,
        Err(f) => {
            let line = serde_json::to_string(&f).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", f.kind));
            let _ = writeln!(stderr, "{line}");
            EXIT_RUNTIME
        }
    }
}
