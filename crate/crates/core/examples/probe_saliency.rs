//! Scratch probe for the saliency localization ratio (not a deliverable).

use attrank::data::{blob_bounding_box, generate_to_dir, load_dataset, SyntheticKind, SyntheticSpec};
use attrank::nn::FeatureExtractorSpec;
use attrank::saliency::{saliency_pair, ChannelReduce, SmoothingConfig};
use attrank::train::{train, TrainConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        kind: SyntheticKind::BlobSize,
        n_images: 200,
        image_size: 32,
        n_train_pairs: 1000,
        n_test_pairs: 300,
        equality_fraction: 0.0,
        seed: 99,
    };
    generate_to_dir(&spec, dir.path()).unwrap();
    let ds = load_dataset(dir.path(), &Default::default()).unwrap();
    let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
    let out = train(&ds, &FeatureExtractorSpec::default_32x32(), &cfg).unwrap();

    let smoothing = SmoothingConfig::default();
    let mut ratios = Vec::new();
    for pair in ds.test_pairs.iter().take(50) {
        let img_i = &ds.samples[&pair.id_i];
        let img_j = &ds.samples[&pair.id_j];
        let (map_i, map_j) = saliency_pair(&out.model, &img_i.pixels, &img_j.pixels, &smoothing, ChannelReduce::Max).unwrap();
        for (sample, map) in [(img_i, &map_i), (img_j, &map_j)] {
            let s = sample.latent_strength.unwrap();
            let (r0, r1, c0, c1) = blob_bounding_box(s, 32);
            let total: f64 = map.map.data().iter().sum();
            let mut inside = 0.0;
            for row in r0..=r1 {
                for col in c0..=c1 {
                    inside += map.map.data()[row * 32 + col];
                }
            }
            let box_fraction = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64 / 1024.0;
            if total > 0.0 {
                ratios.push((inside / total) / box_fraction);
            }
        }
    }
    let mean: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("saliency ratio over {} maps: mean={mean:.3} min={min:.3}", ratios.len());
}
