//! attrank: train and evaluate pairwise attribute-ranking models, generate
//! synthetic benchmarks, extract global rankings, and render saliency maps.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! integrity error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<attrank::Error> for CliError {
    fn from(e: attrank::Error) -> Self {
        use attrank::Error::*;
        match e {
            Contract(_) | Shape(_) => CliError::Usage(e.to_string()),
            Domain(_) | Numeric(_) => CliError::Numeric(e.to_string()),
            Parse { .. } | Data(_) | Checkpoint(_) | Io(_) => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "attrank", version, about = "Pairwise attribute ranking at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pair-annotated dataset with known ground truth.
    Generate(GenerateArgs),
    /// Train a ranking model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint: percentage of correctly ordered pairs.
    Eval(EvalArgs),
    /// Write the global ranking of every image under a checkpoint.
    Rank(RankArgs),
    /// Render posterior-gradient saliency overlays for test pairs.
    Saliency(SaliencyArgs),
    /// Verify recorded gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Re-run from a resolved-config echo; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// brightness, blob_size, or vertical_position.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    n_train_pairs: Option<usize>,
    #[arg(long)]
    n_test_pairs: Option<usize>,
    /// Share of pairs sampled from the near-equal regime (t = 0.5).
    #[arg(long)]
    equality_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (images/, train_pairs.csv, test_pairs.csv).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint, report, and logs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extractor layers, e.g. `conv:8x3s1p1,pool:2s2,dense:64`.
    #[arg(long)]
    arch: Option<String>,
    /// Resume from this checkpoint; --epochs then counts additional epochs.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_pairs: Option<usize>,
    #[arg(long)]
    lr_extractor: Option<f64>,
    #[arg(long)]
    lr_ranker: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip_lo: Option<f64>,
    #[arg(long)]
    clip_hi: Option<f64>,
    #[arg(long)]
    rmsprop_rho: Option<f64>,
    #[arg(long)]
    rmsprop_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train only the ranking layer (frozen-feature baseline).
    #[arg(long)]
    freeze_extractor: bool,
    /// Apply weight decay to biases too.
    #[arg(long)]
    decay_biases: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate. Omitted only with --oracle.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which pair split to score: test or train.
    #[arg(long)]
    split: Option<String>,
    /// Band for counting an equality pair correct; default 0.1·stddev of scores.
    #[arg(long)]
    equality_epsilon: Option<f64>,
    /// Score by stored latent strengths instead of a model (synthetic data).
    #[arg(long)]
    oracle: bool,
    /// Evaluate a random subset of the pairs (0, 1].
    #[arg(long)]
    subset_fraction: Option<f64>,
    #[arg(long)]
    subset_seed: Option<u64>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SaliencyArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// How many test pairs to render (from the front of the split).
    #[arg(long)]
    n_pairs: Option<usize>,
    /// Gaussian smoothing standard deviation in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Channel reduction: max or sum.
    #[arg(long)]
    channel_reduce: Option<String>,
    /// Also dump each raw map as a CSV grid.
    #[arg(long)]
    dump_csv: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Optional output directory for the report and config echo.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extractor layers for the full pair-loss check.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Elements checked per parameter tensor (random subset).
    #[arg(long)]
    samples_per_param: Option<usize>,
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own rich message; map usage errors to exit 1
            // while --help/--version stay successful.
            let help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if help { Ok(()) } else { Err(CliError::Usage(String::new())) };
        }
    };
    match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Rank(args) => commands::rank::run(args),
        Command::Saliency(args) => commands::saliency::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message().is_empty() {
                eprintln!("error: {}", e.message());
            }
            ExitCode::from(e.code())
        }
    }
}
