use std::fs;

use attrank::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use attrank::nn::{parse_layers, FeatureExtractorSpec};
use attrank::ranking::PosteriorConfig;
use attrank::train::{resume_with_observer, train_with_observer, TrainConfig};

use crate::config::{resolve, resolve_flag, Resolved};
use crate::{CliError, TrainArgs};

const KEYS: &[&str] = &[
    "data",
    "out",
    "arch",
    "resume",
    "epochs",
    "batch_pairs",
    "lr_extractor",
    "lr_ranker",
    "weight_decay",
    "clip_lo",
    "clip_hi",
    "rmsprop_rho",
    "rmsprop_eps",
    "seed",
    "freeze_extractor",
    "decay_biases",
];

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let file = super::file_overlay(&args.config, "train", KEYS)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: resolve(args.epochs, &file, "epochs", defaults.epochs)?,
        batch_pairs: resolve(args.batch_pairs, &file, "batch_pairs", defaults.batch_pairs)?,
        lr_extractor: resolve(args.lr_extractor, &file, "lr_extractor", defaults.lr_extractor)?,
        lr_ranker: resolve(args.lr_ranker, &file, "lr_ranker", defaults.lr_ranker)?,
        weight_decay: resolve(args.weight_decay, &file, "weight_decay", defaults.weight_decay)?,
        clip: PosteriorConfig {
            clip_lo: resolve(args.clip_lo, &file, "clip_lo", defaults.clip.clip_lo)?,
            clip_hi: resolve(args.clip_hi, &file, "clip_hi", defaults.clip.clip_hi)?,
        },
        rmsprop_rho: resolve(args.rmsprop_rho, &file, "rmsprop_rho", defaults.rmsprop_rho)?,
        rmsprop_epsilon: resolve(args.rmsprop_eps, &file, "rmsprop_eps", defaults.rmsprop_epsilon)?,
        seed: resolve(args.seed, &file, "seed", defaults.seed)?,
        freeze_extractor: resolve_flag(args.freeze_extractor, &file, "freeze_extractor")?,
        decay_biases: resolve_flag(args.decay_biases, &file, "decay_biases")?,
    };
    // Validation failures must precede any compute.
    cfg.validate()?;

    let default_arch = FeatureExtractorSpec::default_32x32().layers_to_string();
    let arch_text = resolve(args.arch, &file, "arch", default_arch)?;
    let layers = parse_layers(&arch_text)?;

    let resume_from = match args.resume {
        Some(p) => Some(p),
        None => file.get("resume").map(std::path::PathBuf::from),
    };

    let dataset = super::dataset(&args.data)?;
    let input = dataset
        .image_shape()
        .ok_or_else(|| CliError::Data("dataset contains no images".into()))?;
    let spec = FeatureExtractorSpec { input, layers };
    spec.validate()?;

    let mut echo = Resolved::new("train");
    echo.set("data", args.data.display());
    echo.set("out", args.out.display());
    echo.set("arch", spec.layers_to_string());
    if let Some(r) = &resume_from {
        echo.set("resume", r.display());
    }
    echo.set("epochs", cfg.epochs);
    echo.set("batch_pairs", cfg.batch_pairs);
    echo.set("lr_extractor", cfg.lr_extractor);
    echo.set("lr_ranker", cfg.lr_ranker);
    echo.set("weight_decay", cfg.weight_decay);
    echo.set("clip_lo", cfg.clip.clip_lo);
    echo.set("clip_hi", cfg.clip.clip_hi);
    echo.set("rmsprop_rho", cfg.rmsprop_rho);
    echo.set("rmsprop_eps", cfg.rmsprop_epsilon);
    echo.set("seed", cfg.seed);
    echo.set("freeze_extractor", cfg.freeze_extractor);
    echo.set("decay_biases", cfg.decay_biases);
    echo.write_echo(&args.out)?;

    let mut log_lines = Vec::with_capacity(cfg.epochs);
    let observer = |stats: &attrank::train::EpochStats| {
        let line = stats.log_line();
        println!("{line}");
        log_lines.push(line);
    };
    let mut outcome = match resume_from {
        Some(path) => {
            let ckpt = load_checkpoint(&path)?;
            resume_with_observer(&dataset, ckpt, &cfg, cfg.epochs, observer)?
        }
        None => train_with_observer(&dataset, &spec, &cfg, observer)?,
    };

    let ckpt_path = args.out.join("model.ckpt");
    save_checkpoint(&Checkpoint { model: outcome.model, state: outcome.state }, &ckpt_path)?;
    outcome.report.checkpoint_path = Some(ckpt_path.display().to_string());

    let report_json = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
    fs::write(args.out.join("report.json"), report_json + "\n")
        .map_err(|e| CliError::Data(format!("cannot write report: {e}")))?;
    fs::write(args.out.join("train_log.txt"), log_lines.join("\n") + "\n")
        .map_err(|e| CliError::Data(format!("cannot write log: {e}")))?;

    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
