use std::collections::BTreeMap;
use std::fs;

use attrank::checkpoint::load_checkpoint;
use attrank::eval::{default_equality_epsilon, pairwise_accuracy, subsample_pairs};

use crate::config::{resolve, resolve_flag, Resolved};
use crate::{CliError, EvalArgs};

const KEYS: &[&str] = &[
    "ckpt",
    "data",
    "out",
    "split",
    "equality_epsilon",
    "oracle",
    "subset_fraction",
    "subset_seed",
];

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let file = super::file_overlay(&args.config, "eval", KEYS)?;
    let split = resolve(args.split, &file, "split", "test".to_string())?;
    let oracle = resolve_flag(args.oracle, &file, "oracle")?;
    let subset_seed = resolve(args.subset_seed, &file, "subset_seed", 0)?;
    let subset_fraction = match args.subset_fraction {
        Some(f) => Some(f),
        None => file
            .get("subset_fraction")
            .map(|raw| raw.parse::<f64>().map_err(|_| CliError::Usage(format!("bad subset_fraction {raw:?}"))))
            .transpose()?,
    };
    let ckpt_path = match &args.ckpt {
        Some(p) => Some(p.clone()),
        None => file.get("ckpt").map(std::path::PathBuf::from),
    };
    if ckpt_path.is_none() && !oracle {
        return Err(CliError::Usage("either --ckpt or --oracle is required".into()));
    }

    let dataset = super::dataset(&args.data)?;
    let pairs = match split.as_str() {
        "test" => dataset.test_pairs.clone(),
        "train" => dataset.train_pairs.clone(),
        other => return Err(CliError::Usage(format!("unknown split {other:?} (test, train)"))),
    };
    let pairs = match subset_fraction {
        Some(f) => subsample_pairs(&pairs, f, subset_seed)?,
        None => pairs,
    };

    // Scores come either from the checkpointed model or from the stored
    // ground-truth latents (the oracle scorer for synthetic data).
    let referenced: Vec<&str> = {
        let mut ids: Vec<&str> = pairs.iter().flat_map(|p| [p.id_i.as_str(), p.id_j.as_str()]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let scores: BTreeMap<String, f64> = if oracle {
        referenced
            .iter()
            .map(|id| {
                let sample = dataset
                    .samples
                    .get(*id)
                    .ok_or_else(|| CliError::Data(format!("pair references missing image id {id:?}")))?;
                let s = sample
                    .latent_strength
                    .ok_or_else(|| CliError::Data(format!("no ground-truth strength for {id:?}; oracle needs a generator manifest")))?;
                Ok((id.to_string(), s))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        let ckpt = load_checkpoint(ckpt_path.as_ref().expect("checked above"))?;
        referenced
            .iter()
            .map(|id| {
                let sample = dataset
                    .samples
                    .get(*id)
                    .ok_or_else(|| CliError::Data(format!("pair references missing image id {id:?}")))?;
                Ok((id.to_string(), ckpt.model.rank_score(&sample.pixels)?))
            })
            .collect::<Result<_, CliError>>()?
    };

    let epsilon = match args.equality_epsilon {
        Some(e) => e,
        None => match file.get("equality_epsilon") {
            Some(raw) => raw
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad equality_epsilon {raw:?}")))?,
            None => default_equality_epsilon(&scores),
        },
    };
    let result = pairwise_accuracy(&scores, &pairs, epsilon)?;

    let mut echo = Resolved::new("eval");
    if let Some(p) = &ckpt_path {
        echo.set("ckpt", p.display());
    }
    echo.set("data", args.data.display());
    echo.set("out", args.out.display());
    echo.set("split", &split);
    echo.set("equality_epsilon", epsilon);
    echo.set("oracle", oracle);
    if let Some(f) = subset_fraction {
        echo.set("subset_fraction", f);
        echo.set("subset_seed", subset_seed);
    }
    echo.write_echo(&args.out)?;

    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| CliError::Data(format!("cannot serialize result: {e}")))?;
    fs::write(args.out.join("eval.json"), json + "\n")
        .map_err(|e| CliError::Data(format!("cannot write eval.json: {e}")))?;

    println!(
        "ordered pairs: {} (accuracy below), equality pairs: {} (accuracy {}, epsilon {:.6})",
        result.n_ordered_pairs,
        result.n_equality_pairs,
        result
            .equality_accuracy
            .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}")),
        result.equality_epsilon,
    );
    // The machine-readable line: ordered accuracy, last on stdout.
    match result.ordered_accuracy {
        Some(a) => println!("{a:.4}"),
        None => println!("nan"),
    }
    Ok(())
}
