use std::str::FromStr;

use attrank::data::{generate_to_dir, SyntheticKind, SyntheticSpec};
use attrank::ranking::TargetProbability;

use crate::config::{resolve, Resolved};
use crate::{CliError, GenerateArgs};

const KEYS: &[&str] = &[
    "out",
    "kind",
    "n_images",
    "image_size",
    "n_train_pairs",
    "n_test_pairs",
    "equality_fraction",
    "seed",
];

pub fn run(args: GenerateArgs) -> Result<(), CliError> {
    let file = super::file_overlay(&args.config, "generate", KEYS)?;
    let kind_text = resolve(args.kind, &file, "kind", "brightness".to_string())?;
    let kind = SyntheticKind::from_str(&kind_text)?;
    let spec = SyntheticSpec {
        kind,
        n_images: resolve(args.n_images, &file, "n_images", 200)?,
        image_size: resolve(args.image_size, &file, "image_size", 32)?,
        n_train_pairs: resolve(args.n_train_pairs, &file, "n_train_pairs", 1000)?,
        n_test_pairs: resolve(args.n_test_pairs, &file, "n_test_pairs", 300)?,
        equality_fraction: resolve(args.equality_fraction, &file, "equality_fraction", 0.0)?,
        seed: resolve(args.seed, &file, "seed", 7)?,
    };
    spec.validate()?;

    let mut echo = Resolved::new("generate");
    echo.set("out", args.out.display());
    echo.set("kind", kind);
    echo.set("n_images", spec.n_images);
    echo.set("image_size", spec.image_size);
    echo.set("n_train_pairs", spec.n_train_pairs);
    echo.set("n_test_pairs", spec.n_test_pairs);
    echo.set("equality_fraction", spec.equality_fraction);
    echo.set("seed", spec.seed);
    echo.write_echo(&args.out)?;

    let ds = generate_to_dir(&spec, &args.out)?;
    let equal = ds
        .train_pairs
        .iter()
        .filter(|p| p.target == TargetProbability::EQUAL)
        .count();
    println!(
        "wrote {} images, {} train pairs ({} equality), {} test pairs to {}",
        ds.samples.len(),
        ds.train_pairs.len(),
        equal,
        ds.test_pairs.len(),
        args.out.display()
    );
    Ok(())
}
