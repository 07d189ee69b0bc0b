//! Scratch probe for the equality-pull criterion (not a deliverable).

use std::collections::BTreeMap;

use attrank::data::{generate_to_dir, load_dataset, SyntheticKind, SyntheticSpec};
use attrank::eval::score_images;
use attrank::nn::{FeatureExtractorSpec, RankModel};
use attrank::train::{train, TrainConfig};

fn main() {
    let kind: SyntheticKind = std::env::args().nth(1).unwrap_or_default().parse().unwrap_or(SyntheticKind::VerticalPosition);
    let freeze = std::env::args().any(|a| a == "freeze");
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        kind,
        n_images: 100,
        image_size: 32,
        n_train_pairs: 300,
        n_test_pairs: 10,
        equality_fraction: 1.0,
        seed: 99,
    };
    generate_to_dir(&spec, dir.path()).unwrap();
    let ds = load_dataset(dir.path(), &Default::default()).unwrap();
    let arch = FeatureExtractorSpec::dense_only((1, 32, 32), &[16]);

    let mean_gap = |model: &RankModel| -> f64 {
        let scores: BTreeMap<String, f64> = score_images(model, ds.samples.values()).unwrap();
        ds.train_pairs
            .iter()
            .map(|p| (scores[&p.id_i] - scores[&p.id_j]).abs())
            .sum::<f64>()
            / ds.train_pairs.len() as f64
    };

    for seed in [1u64, 2, 3] {
        let init = mean_gap(&RankModel::init(&arch, seed).unwrap());
        let mut row = format!("{kind} seed {seed} freeze={freeze}: init {init:.6}");
        for epochs in [1usize, 2, 5] {
            let cfg = TrainConfig { seed, epochs, freeze_extractor: freeze, ..TrainConfig::default() };
            let out = train(&ds, &arch, &cfg).unwrap();
            row += &format!(" → e{epochs} {:.6}", mean_gap(&out.model));
        }
        println!("{row}");
    }
}
