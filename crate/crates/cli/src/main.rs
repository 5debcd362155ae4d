//! `clinsent`: batch pipelines for per-domain clinical sentence sentiment.
//!
//! Exit status: 0 on success, 2 for usage errors, 3 when inputs or
//! configuration fail validation, 1 for any other failure.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use clinsent::corpus::Split;
use clinsent::semisup::MixRatio;

use crate::config::{MethodName, Overrides, PipelineConfig};
use crate::error::CliError;
use crate::manifest::Recorder;

#[derive(Parser, Debug)]
#[command(name = "clinsent", version, about = "Clinical sentence sentiment pipelines")]
struct Cli {
    /// JSON pipeline configuration; defaults to $CLIN_SENT_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EmbeddingArgs {
    /// Precomputed vectors: `id<TAB>v1<TAB>...<TAB>vD` per line.
    #[arg(long, conflicts_with = "hash_dim")]
    pub embeddings: Option<PathBuf>,
    /// Use the hashing embedder with this many dimensions.
    #[arg(long)]
    pub hash_dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a corpus (and optionally an embedding store) for errors.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        emb: EmbeddingArgs,
    },
    /// Annotation counts per domain and label.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic corpus from a generator spec.
    GenSynth {
        /// Generator spec JSON; the bundled seven-domain spec when absent.
        #[arg(long)]
        genspec: Option<PathBuf>,
        /// Write unlabeled `{"id","text"}` lines instead of a corpus.
        #[arg(long)]
        as_pool: bool,
        /// Output file name inside the output directory.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score the lexicon baseline.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train the seven-domain suite on the training split.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        emb: EmbeddingArgs,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// Grid of candidate hyperparameters (JSON) to tune by cross-validation.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Label every annotated domain of every sentence in a split.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        emb: EmbeddingArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Score predictions against gold labels, or aggregate per-domain rows.
    Evaluate {
        #[arg(long, required_unless_present = "rows", requires = "predictions")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Per-domain metric rows (TSV) to aggregate instead of scoring.
        #[arg(long, conflicts_with_all = ["corpus", "predictions"])]
        rows: Option<PathBuf>,
        /// Print only the averaged row.
        #[arg(long)]
        aggregate_only: bool,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Inter-annotator agreement for an items x raters label table.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Retrain a suite with pseudo-labeled sentences from an unlabeled pool.
    Augment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Unlabeled `{"id","text"}` JSONL.
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        emb: EmbeddingArgs,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        #[arg(long)]
        k: Option<usize>,
        /// Labeled:pseudo-labeled count ratio.
        #[arg(long)]
        ratio: Option<MixRatio>,
        /// Minimum self-training confidence.
        #[arg(long, allow_negative_numbers = true)]
        floor: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
    },
    /// Render evaluation reports side by side as one results table.
    Report {
        #[arg(long = "eval", required = true)]
        evals: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Stats { .. } => "stats",
            Command::GenSynth { .. } => "gen-synth",
            Command::Baseline { .. } => "baseline",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Agreement { .. } => "agreement",
            Command::Augment { .. } => "augment",
            Command::Report { .. } => "report",
        }
    }

    fn overrides(&self, cli: &Cli) -> Overrides {
        let mut o = Overrides { out: cli.out.clone(), seed: cli.seed, ..Default::default() };
        let emb = |o: &mut Overrides, e: &EmbeddingArgs| {
            o.embeddings = e.embeddings.clone();
            o.hash_dim = e.hash_dim;
        };
        match self {
            Command::Validate { emb: e, .. } | Command::Predict { emb: e, .. } => emb(&mut o, e),
            Command::Baseline { lexicon, tau, .. } => {
                o.lexicon = lexicon.clone();
                o.tau = *tau;
            }
            Command::Train { emb: e, alpha, folds, .. } => {
                emb(&mut o, e);
                o.alpha = *alpha;
                o.folds = *folds;
            }
            Command::Augment { emb: e, method, k, ratio, floor, alpha, .. } => {
                emb(&mut o, e);
                o.method = *method;
                o.k = *k;
                o.ratio = *ratio;
                o.floor = *floor;
                o.alpha = *alpha;
            }
            _ => {}
        }
        o
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let overrides = cli.command.overrides(&cli);
    let (loaded, config_file) = match PipelineConfig::load(cli.config.as_deref()) {
        Ok((cfg, file)) => (Ok(cfg), file),
        // still record the failed run under the defaults
        Err(e) => (Err(e), cli.config.clone()),
    };
    let mut config = loaded.as_ref().cloned().unwrap_or_default();
    config.apply(&overrides);
    let mut rec = Recorder::new(cli.command.name(), argv, config, config_file.clone());
    let outcome = loaded
        .map(drop)
        .and_then(|()| config_file.as_deref().map_or(Ok(()), |p| rec.input(p)))
        .and_then(|()| rec.config().validate())
        .and_then(|()| commands::dispatch(&cli.command, &mut rec));
    let written = rec.finish(&outcome);
    outcome?;
    written.map(|p| log::info!("run manifest written to {}", p.display()))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(e) = run(cli, argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
