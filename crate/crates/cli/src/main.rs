//! `idiomkit` command-line driver.
//!
//! Exit codes: 0 on success, 1 for usage or input validation errors, 2 when
//! a run fails at runtime.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idiomkit::models::{ModelKind, Preset};

#[derive(Debug, Parser)]
#[command(name = "idiomkit", version, about = "Sorani Kurdish idiom detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a text file line by line.
    Normalize {
        /// Input text, one sentence per line.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Unification table (`U+XXXX<TAB>U+XXXX` per line); the bundled table by default.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Vocabulary operations.
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// Tokenize a text file into JSON lines of ids, mask and real length.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 128)]
        max_len: usize,
        /// Input text, one (already normalized) sentence per line.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic idiom dataset as TSV.
    GenData {
        /// Number of idiom classes.
        #[arg(long)]
        idioms: usize,
        /// Contexts per idiom.
        #[arg(long)]
        contexts: usize,
        /// Sentence variants per context.
        #[arg(long)]
        variants: usize,
        /// Sentences in the non-idiom class.
        #[arg(long)]
        non_idiom: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset file and print a summary.
    Validate {
        #[arg(long)]
        data: PathBuf,
        /// Classes with fewer examples are reported as warnings.
        #[arg(long, default_value_t = 5)]
        min_count: usize,
    },
    /// Write a stratified k-fold plan with nested validation splits.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on one fold.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long, value_enum, default_value_t = PresetArg::Paper)]
        preset: PresetArg,
        #[command(flatten)]
        hyper: Hyper,
        /// Run directory for checkpoints, vocabulary and record.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run k-fold cross-validation for one model.
    Cv {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
        preset: PresetArg,
        #[command(flatten)]
        hyper: Hyper,
        /// Folds trained at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Output directory: plan.json, fold*/, cv.json and report/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split of a fold.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        fold: usize,
        /// Also write the evaluation as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one sentence.
    Classify {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file; the one next to the checkpoint by default.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        text: String,
    },
    /// Build tables and curve data from every record.json under a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum VocabCommand {
    /// Train a WordPiece vocabulary on a corpus.
    Train {
        /// Corpus text, one sentence per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Target vocabulary size, special tokens included.
        #[arg(long, default_value_t = 30000)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Overrides for the preset's training settings.
#[derive(Debug, Args)]
struct Hyper {
    /// Epochs [paper: transformer 15, rcnn 50, bilstm-attn 50].
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Peak learning rate [paper: 2e-5; desk: per model].
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum sequence length including [CLS] and [SEP].
    #[arg(long, default_value_t = 128)]
    max_len: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Transformer,
    Rcnn,
    BilstmAttn,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Transformer => ModelKind::Transformer,
            ModelArg::Rcnn => ModelKind::Rcnn,
            ModelArg::BilstmAttn => ModelKind::BilstmAttn,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
