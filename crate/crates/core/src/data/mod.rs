//! Datasets of pairwise-compared images: loading, validation, synthetic
//! generation, and per-epoch minibatching.

mod loader;
mod synthetic;

pub use loader::{load_dataset, load_image, load_pairs, load_pairs_with, save_image, save_pairs, LoadOptions};
pub use synthetic::{
    blob_bounding_box, blob_radius, generate_synthetic, generate_to_dir, label_from_strengths,
    render_image, write_dataset, SyntheticKind, SyntheticSpec, EQUALITY_DELTA,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::ranking::TargetProbability;

/// One image with its identifier and, for synthetic data, the latent
/// attribute strength it was rendered from.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub id: String,
    /// Pixels in `[0, 1]`, shape `c×h×w`.
    pub pixels: Tensor,
    pub latent_strength: Option<f64>,
}

/// A supervised comparison: `target` = 1 means `id_i` shows more of the
/// attribute than `id_j`, 0 the reverse, 0.5 equal strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPair {
    pub id_i: String,
    pub id_j: String,
    pub target: TargetProbability,
    pub attribute: String,
}

/// Samples plus train/test pair lists for a single attribute.
#[derive(Debug, Clone, Default)]
pub struct PairDataset {
    pub samples: BTreeMap<String, ImageSample>,
    pub train_pairs: Vec<ComparisonPair>,
    pub test_pairs: Vec<ComparisonPair>,
    pub attribute: String,
}

impl PairDataset {
    /// Checks every dataset invariant: pairs resolve, one attribute
    /// throughout, consistent image shape, pixels in range, and train/test
    /// disjoint as (id_i, id_j, attribute) triples.
    pub fn validate(&self) -> Result<()> {
        let mut shape: Option<Vec<usize>> = None;
        for sample in self.samples.values() {
            match &shape {
                None => shape = Some(sample.pixels.shape().to_vec()),
                Some(s) if s.as_slice() != sample.pixels.shape() => {
                    return Err(Error::Data(format!(
                        "image {} has shape {:?}, dataset uses {:?}",
                        sample.id,
                        sample.pixels.shape(),
                        s
                    )));
                }
                _ => {}
            }
            if sample.pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Data(format!("image {} has pixels outside [0, 1]", sample.id)));
            }
        }
        for pair in self.train_pairs.iter().chain(&self.test_pairs) {
            for id in [&pair.id_i, &pair.id_j] {
                if !self.samples.contains_key(id) {
                    return Err(Error::Data(format!("pair references missing image id {id:?}")));
                }
            }
            if pair.attribute != self.attribute {
                return Err(Error::Data(format!(
                    "pair attribute {:?} differs from dataset attribute {:?}",
                    pair.attribute, self.attribute
                )));
            }
        }
        let train_triples: BTreeSet<(&str, &str, &str)> = self
            .train_pairs
            .iter()
            .map(|p| (p.id_i.as_str(), p.id_j.as_str(), p.attribute.as_str()))
            .collect();
        for p in &self.test_pairs {
            if train_triples.contains(&(p.id_i.as_str(), p.id_j.as_str(), p.attribute.as_str())) {
                return Err(Error::Data(format!(
                    "pair ({}, {}) appears in both train and test splits",
                    p.id_i, p.id_j
                )));
            }
        }
        Ok(())
    }

    /// Shape shared by all images, if any image exists.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.values().next().map(|s| {
            let sh = s.pixels.shape();
            (sh[0], sh[1], sh[2])
        })
    }

    /// Ground-truth strengths keyed by id, when present (synthetic data).
    pub fn latent_strengths(&self) -> BTreeMap<String, f64> {
        self.samples
            .iter()
            .filter_map(|(id, s)| s.latent_strength.map(|v| (id.clone(), v)))
            .collect()
    }
}

/// Splits the pairs into batches under a fresh permutation for the given
/// epoch. The permutation is keyed by `(seed, epoch)`, every pair appears
/// exactly once, and a final short batch is emitted.
pub fn minibatches(
    pairs: &[ComparisonPair],
    batch_pairs: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<ComparisonPair>>> {
    if batch_pairs == 0 {
        return Err(Error::Contract("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_pairs)
        .map(|chunk| chunk.iter().map(|&i| pairs[i].clone()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize) -> Vec<ComparisonPair> {
        (0..n)
            .map(|i| ComparisonPair {
                id_i: format!("a{i}"),
                id_j: format!("b{i}"),
                target: TargetProbability::FIRST_OUTRANKS,
                attribute: "attr".into(),
            })
            .collect()
    }

    #[test]
    fn batch_sizes_cover_all_pairs() {
        let batches = minibatches(&pairs(33), 16, 0, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![16, 16, 1]);
    }

    #[test]
    fn same_seed_and_epoch_reproduce_order() {
        let p = pairs(20);
        let a = minibatches(&p, 4, 9, 3).unwrap();
        let b = minibatches(&p, 4, 9, 3).unwrap();
        assert_eq!(a, b);
        let c = minibatches(&p, 4, 9, 4).unwrap();
        assert_ne!(a, c, "different epochs should permute differently");
    }

    #[test]
    fn emitted_multiset_equals_input() {
        let p = pairs(23);
        let flat: Vec<ComparisonPair> = minibatches(&p, 5, 1, 7).unwrap().into_iter().flatten().collect();
        assert_eq!(flat.len(), p.len());
        let mut seen: Vec<&str> = flat.iter().map(|x| x.id_i.as_str()).collect();
        let mut want: Vec<&str> = p.iter().map(|x| x.id_i.as_str()).collect();
        seen.sort_unstable();
        want.sort_unstable();
        assert_eq!(seen, want);
    }

    #[test]
    fn zero_batch_size_is_a_contract_error() {
        assert!(minibatches(&pairs(3), 0, 0, 0).is_err());
    }

    #[test]
    fn validation_rejects_overlapping_splits_and_missing_ids() {
        let mut ds = PairDataset {
            attribute: "attr".into(),
            ..Default::default()
        };
        ds.samples.insert(
            "a0".into(),
            ImageSample { id: "a0".into(), pixels: Tensor::zeros(&[1, 2, 2]), latent_strength: None },
        );
        ds.samples.insert(
            "b0".into(),
            ImageSample { id: "b0".into(), pixels: Tensor::zeros(&[1, 2, 2]), latent_strength: None },
        );
        let p = ComparisonPair {
            id_i: "a0".into(),
            id_j: "b0".into(),
            target: TargetProbability::EQUAL,
            attribute: "attr".into(),
        };
        ds.train_pairs = vec![p.clone()];
        assert!(ds.validate().is_ok());
        ds.test_pairs = vec![p.clone()];
        assert!(ds.validate().is_err(), "train/test overlap must be rejected");
        ds.test_pairs = vec![ComparisonPair { id_j: "zz".into(), ..p }];
        assert!(ds.validate().is_err(), "missing id must be rejected");
    }
}
