//! Scratch probe for acceptance-scale runs (not part of the deliverable).

use std::time::Instant;

use attrank::data::{generate_to_dir, load_dataset, SyntheticKind, SyntheticSpec};
use attrank::eval::{global_ranking, kendall_tau, model_pairwise_accuracy, score_images};
use attrank::nn::FeatureExtractorSpec;
use attrank::train::{train, TrainConfig};

fn main() {
    let kind = match std::env::args().nth(1).as_deref() {
        Some("blob") => SyntheticKind::BlobSize,
        _ => SyntheticKind::Brightness,
    };
    let freeze = std::env::args().any(|a| a == "freeze");
    let epochs: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(25);

    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        kind,
        n_images: 200,
        image_size: 32,
        n_train_pairs: 1000,
        n_test_pairs: 300,
        equality_fraction: 0.0,
        seed: 99,
    };
    generate_to_dir(&spec, dir.path()).unwrap();
    let ds = load_dataset(dir.path(), &Default::default()).unwrap();
    let arch = FeatureExtractorSpec::default_32x32();

    for seed in [1u64, 2, 3] {
        let t0 = Instant::now();
        let cfg = TrainConfig { seed, epochs, freeze_extractor: freeze, ..TrainConfig::default() };
        let out = train(&ds, &arch, &cfg).unwrap();
        let acc = model_pairwise_accuracy(&out.model, &ds, &ds.test_pairs, None).unwrap();
        let scores = score_images(&out.model, ds.samples.values()).unwrap();
        let tau = kendall_tau(&global_ranking(&scores), &ds.latent_strengths()).unwrap();
        let first = out.report.epochs.first().unwrap().mean_loss;
        let last = out.report.epochs.last().unwrap().mean_loss;
        println!(
            "{kind} seed {seed} freeze={freeze}: acc={:.4} tau={:.4} loss {first:.4}->{last:.4} in {:.1}s",
            acc.ordered_accuracy.unwrap(),
            tau,
            t0.elapsed().as_secs_f64()
        );
    }
}
