//! Evaluation: percentage of correctly ordered pairs, global ranking
//! extraction, and Kendall tau against ground-truth strengths.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use serde::Serialize;

use crate::data::{ComparisonPair, ImageSample, PairDataset};
use crate::error::{Error, Result};
use crate::nn::RankModel;
use crate::ranking::TargetProbability;

/// Pairwise accuracy split into ordered (t ∈ {0, 1}) and equality (t = 0.5)
/// pairs. `ordered_accuracy` is `None` when no ordered pair was evaluated.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub ordered_accuracy: Option<f64>,
    pub n_ordered_pairs: usize,
    pub equality_accuracy: Option<f64>,
    pub n_equality_pairs: usize,
    pub equality_epsilon: f64,
}

/// Complete ordering of images by rank score, descending, ties broken by id.
#[derive(Debug, Clone)]
pub struct GlobalRanking {
    /// (image id, score), best first.
    pub entries: Vec<(String, f64)>,
}

/// Scores every sample through the model, keyed by id.
pub fn score_images<'a>(
    model: &RankModel,
    samples: impl IntoIterator<Item = &'a ImageSample>,
) -> Result<BTreeMap<String, f64>> {
    samples
        .into_iter()
        .map(|s| Ok((s.id.clone(), model.rank_score(&s.pixels)?)))
        .collect()
}

/// The default band for counting an equality pair as correct:
/// one tenth of the score standard deviation.
pub fn default_equality_epsilon(scores: &BTreeMap<String, f64>) -> f64 {
    let n = scores.len();
    if n == 0 {
        return 0.0;
    }
    let mean = scores.values().sum::<f64>() / n as f64;
    let var = scores.values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    0.1 * var.sqrt()
}

/// Counts correctly ordered pairs under precomputed scores.
///
/// A t = 1 pair is correct iff `r_i > r_j`, a t = 0 pair iff `r_i < r_j`;
/// exact score ties count as incorrect. Equality pairs are excluded from the
/// headline number and scored separately as correct iff `|r_i − r_j| ≤ ε`.
pub fn pairwise_accuracy(
    scores: &BTreeMap<String, f64>,
    pairs: &[ComparisonPair],
    equality_epsilon: f64,
) -> Result<EvalResult> {
    if equality_epsilon < 0.0 {
        return Err(Error::Contract(format!("equality epsilon {equality_epsilon} must be nonnegative")));
    }
    let mut ordered_correct = 0usize;
    let mut n_ordered = 0usize;
    let mut equal_correct = 0usize;
    let mut n_equal = 0usize;
    for pair in pairs {
        let r_i = *scores
            .get(&pair.id_i)
            .ok_or_else(|| Error::Data(format!("no score for image id {:?}", pair.id_i)))?;
        let r_j = *scores
            .get(&pair.id_j)
            .ok_or_else(|| Error::Data(format!("no score for image id {:?}", pair.id_j)))?;
        if pair.target == TargetProbability::EQUAL {
            n_equal += 1;
            if (r_i - r_j).abs() <= equality_epsilon {
                equal_correct += 1;
            }
        } else {
            n_ordered += 1;
            let want_first = pair.target == TargetProbability::FIRST_OUTRANKS;
            let correct = if want_first { r_i > r_j } else { r_i < r_j };
            if correct {
                ordered_correct += 1;
            }
        }
    }
    Ok(EvalResult {
        ordered_accuracy: (n_ordered > 0).then(|| ordered_correct as f64 / n_ordered as f64),
        n_ordered_pairs: n_ordered,
        equality_accuracy: (n_equal > 0).then(|| equal_correct as f64 / n_equal as f64),
        n_equality_pairs: n_equal,
        equality_epsilon,
    })
}

/// Scores the dataset's images with the model and evaluates the given pairs.
/// When `equality_epsilon` is `None`, the default band is derived from the
/// scores of exactly the images these pairs reference.
pub fn model_pairwise_accuracy(
    model: &RankModel,
    dataset: &PairDataset,
    pairs: &[ComparisonPair],
    equality_epsilon: Option<f64>,
) -> Result<EvalResult> {
    let referenced: BTreeMap<String, &ImageSample> = pairs
        .iter()
        .flat_map(|p| [&p.id_i, &p.id_j])
        .map(|id| {
            dataset
                .samples
                .get(id)
                .map(|s| (id.clone(), s))
                .ok_or_else(|| Error::Data(format!("pair references missing image id {id:?}")))
        })
        .collect::<Result<_>>()?;
    let scores = score_images(model, referenced.into_values())?;
    let epsilon = equality_epsilon.unwrap_or_else(|| default_equality_epsilon(&scores));
    pairwise_accuracy(&scores, pairs, epsilon)
}

/// Sorts ids descending by score, breaking exact ties by id.
pub fn global_ranking(scores: &BTreeMap<String, f64>) -> GlobalRanking {
    let mut entries: Vec<(String, f64)> = scores.iter().map(|(k, v)| (k.clone(), *v)).collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    GlobalRanking { entries }
}

/// Scores the listed ids through the model and ranks them.
pub fn model_global_ranking(model: &RankModel, dataset: &PairDataset, ids: &[String]) -> Result<GlobalRanking> {
    let samples: Vec<&ImageSample> = ids
        .iter()
        .map(|id| {
            dataset
                .samples
                .get(id)
                .ok_or_else(|| Error::Data(format!("no image with id {id:?}")))
        })
        .collect::<Result<_>>()?;
    let scores = score_images(model, samples)?;
    Ok(global_ranking(&scores))
}

/// Kendall rank correlation between a predicted total order and ground-truth
/// strengths: `(concordant − discordant) / pairs`, with truth-tied pairs
/// removed from both counts and the denominator. O(n²) by construction —
/// the direct count is its own oracle at this scale.
pub fn kendall_tau(ranking: &GlobalRanking, truth: &BTreeMap<String, f64>) -> Result<f64> {
    let n = ranking.entries.len();
    if n < 2 {
        return Err(Error::Contract(format!("kendall tau needs at least 2 items, got {n}")));
    }
    let truths: Vec<f64> = ranking
        .entries
        .iter()
        .map(|(id, _)| {
            truth
                .get(id)
                .copied()
                .ok_or_else(|| Error::Data(format!("no ground-truth value for id {id:?}")))
        })
        .collect::<Result<_>>()?;
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut usable = 0i64;
    for a in 0..n {
        for b in (a + 1)..n {
            // Position a precedes b, so the prediction says a outranks b.
            if truths[a] == truths[b] {
                continue;
            }
            usable += 1;
            if truths[a] > truths[b] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    if usable == 0 {
        return Err(Error::Contract("kendall tau undefined: all ground-truth values tied".into()));
    }
    Ok((concordant - discordant) as f64 / usable as f64)
}

/// Deterministically samples a fraction of the pairs (without replacement,
/// original order preserved), for very large test splits.
pub fn subsample_pairs(pairs: &[ComparisonPair], fraction: f64, seed: u64) -> Result<Vec<ComparisonPair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Contract(format!("subset fraction {fraction} outside (0, 1]")));
    }
    let k = ((pairs.len() as f64 * fraction).ceil() as usize).min(pairs.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Writes `rank,image_id,score` rows, rank starting at 1.
pub fn write_ranking_csv(ranking: &GlobalRanking, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "rank,image_id,score")?;
    for (idx, (id, score)) in ranking.entries.iter().enumerate() {
        writeln!(file, "{},{},{}", idx + 1, id, score)?;
    }
    Ok(())
}
