//! The end-to-end training loop: per-attribute pair training with RMSProp,
//! per-epoch shuffling, an optional frozen-extractor baseline mode, and
//! resumable state.

use std::time::Instant;

use serde::Serialize;

use crate::autodiff::Graph;
use crate::checkpoint::{Checkpoint, TrainState};
use crate::data::{minibatches, PairDataset};
use crate::error::{Error, Result};
use crate::eval::model_pairwise_accuracy;
use crate::nn::{FeatureExtractorSpec, RankModel};
use crate::optim::{zero_grads, OptimState, ParamGroup, RmsProp};
use crate::ranking::{pair_loss_graph, PosteriorConfig};

/// All optimization hyperparameters. Defaults: minibatch of 16 pairs,
/// extractor rate 1e-5, ranking-layer rate 1e-4, decay 1e-5, posterior clip
/// at 1e-7, RMSProp rho 0.9 / epsilon 1e-8, biases excluded from decay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_pairs: usize,
    pub lr_extractor: f64,
    pub lr_ranker: f64,
    pub weight_decay: f64,
    pub clip: PosteriorConfig,
    pub rmsprop_rho: f64,
    pub rmsprop_epsilon: f64,
    pub seed: u64,
    /// Train only the ranking layer; extractor parameters stay bit-identical.
    pub freeze_extractor: bool,
    /// Apply weight decay to bias parameters as well.
    pub decay_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_pairs: 16,
            lr_extractor: 1e-5,
            lr_ranker: 1e-4,
            weight_decay: 1e-5,
            clip: PosteriorConfig::default(),
            rmsprop_rho: 0.9,
            rmsprop_epsilon: 1e-8,
            seed: 1,
            freeze_extractor: false,
            decay_biases: false,
        }
    }
}

impl TrainConfig {
    /// Rejects non-positive rates and malformed clip bounds. `epochs` may be
    /// zero (a zero-epoch run returns the initialized model untouched).
    pub fn validate(&self) -> Result<()> {
        if self.batch_pairs == 0 {
            return Err(Error::Contract("batch_pairs must be at least 1".into()));
        }
        if self.lr_extractor <= 0.0 || self.lr_ranker <= 0.0 {
            return Err(Error::Contract("learning rates must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Contract("weight decay must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.rmsprop_rho) {
            return Err(Error::Contract(format!("rmsprop rho {} outside [0, 1)", self.rmsprop_rho)));
        }
        if self.rmsprop_epsilon <= 0.0 {
            return Err(Error::Contract("rmsprop epsilon must be positive".into()));
        }
        self.clip.validate()
    }
}

/// Per-epoch record. `train_accuracy` is `None` when the training set has no
/// ordered pairs (pure-equality training).
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: Option<f64>,
    pub seconds: f64,
}

impl EpochStats {
    /// The plain-text log form: `epoch, mean_loss, train_acc, seconds`.
    pub fn log_line(&self) -> String {
        let acc = self.train_accuracy.map_or_else(|| "nan".to_string(), |a| format!("{a:.4}"));
        format!("{}, {:.6}, {}, {:.3}", self.epoch, self.mean_loss, acc, self.seconds)
    }
}

/// Summary of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub freeze_extractor: bool,
    pub epochs: Vec<EpochStats>,
    pub checkpoint_path: Option<String>,
}

/// Model, report, and the state needed to resume or checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RankModel,
    pub report: TrainReport,
    pub state: TrainState,
}

/// Parameter groups in their fixed declaration order: extractor weights,
/// extractor biases, ranking weight, ranking bias. The first two are the
/// frozen set under `freeze_extractor`.
pub fn optimizer_groups(model: &RankModel, cfg: &TrainConfig) -> Result<Vec<ParamGroup>> {
    let (ext_w, ext_b) = model.extractor_weights_and_biases();
    let bias_decay = if cfg.decay_biases { cfg.weight_decay } else { 0.0 };
    Ok(vec![
        ParamGroup::new(ext_w, cfg.lr_extractor, cfg.weight_decay)?,
        ParamGroup::new(ext_b, cfg.lr_extractor, bias_decay)?,
        ParamGroup::new(vec![model.ranker.weight.clone()], cfg.lr_ranker, cfg.weight_decay)?,
        ParamGroup::new(vec![model.ranker.bias.clone()], cfg.lr_ranker, bias_decay)?,
    ])
}

/// Trains a freshly initialized model for `cfg.epochs` epochs.
pub fn train(dataset: &PairDataset, spec: &FeatureExtractorSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(dataset, spec, cfg, |_| {})
}

/// As [`train`], invoking `on_epoch` after each completed epoch.
pub fn train_with_observer(
    dataset: &PairDataset,
    spec: &FeatureExtractorSpec,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = RankModel::init(spec, cfg.seed)?;
    let groups = optimizer_groups(&model, cfg)?;
    let state = TrainState {
        seed: cfg.seed,
        next_epoch: 0,
        loss_history: Vec::new(),
        optim: groups.iter().map(OptimState::for_group).collect(),
    };
    run_epochs(dataset, model, state, cfg, cfg.epochs, on_epoch)
}

/// Continues training from a checkpoint for `extra_epochs` more epochs.
/// The shuffling seed and epoch numbering come from the checkpoint, so a
/// resumed run replays exactly what an uninterrupted run would have done.
pub fn resume(
    dataset: &PairDataset,
    checkpoint: Checkpoint,
    cfg: &TrainConfig,
    extra_epochs: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    run_epochs(dataset, checkpoint.model, checkpoint.state, cfg, extra_epochs, |_| {})
}

/// As [`resume`], invoking `on_epoch` after each completed epoch.
pub fn resume_with_observer(
    dataset: &PairDataset,
    checkpoint: Checkpoint,
    cfg: &TrainConfig,
    extra_epochs: usize,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    run_epochs(dataset, checkpoint.model, checkpoint.state, cfg, extra_epochs, on_epoch)
}

fn run_epochs(
    dataset: &PairDataset,
    model: RankModel,
    mut state: TrainState,
    cfg: &TrainConfig,
    epochs_to_run: usize,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if dataset.train_pairs.is_empty() {
        return Err(Error::Contract("training set has 0 pairs".into()));
    }
    dataset.validate()?;
    let shape = dataset.image_shape().ok_or_else(|| Error::Data("dataset has no images".into()))?;
    if shape != model.spec.input {
        return Err(Error::Contract(format!(
            "dataset images are {shape:?} but the extractor expects {:?}",
            model.spec.input
        )));
    }

    let groups = optimizer_groups(&model, cfg)?;
    if state.optim.len() != groups.len() {
        return Err(Error::Checkpoint(format!(
            "optimizer state has {} groups, expected {}",
            state.optim.len(),
            groups.len()
        )));
    }
    let optimizer = RmsProp { rho: cfg.rmsprop_rho, epsilon: cfg.rmsprop_epsilon };
    let all_params = model.parameters();

    let mut epochs = Vec::with_capacity(epochs_to_run);
    for _ in 0..epochs_to_run {
        let epoch = state.next_epoch;
        let started = Instant::now();
        let batches = minibatches(&dataset.train_pairs, cfg.batch_pairs, state.seed, epoch)?;
        let mut loss_sum = 0.0;
        let mut n_pairs = 0usize;
        for batch in &batches {
            zero_grads(&all_params);
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let mut total = None;
            for pair in batch {
                let img_i = g.constant(dataset.samples[&pair.id_i].pixels.clone());
                let img_j = g.constant(dataset.samples[&pair.id_j].pixels.clone());
                let loss = pair_loss_graph(&mut g, &bound, img_i, img_j, pair.target, &cfg.clip)?;
                total = Some(match total {
                    None => loss,
                    Some(acc) => g.add(acc, loss)?,
                });
            }
            let total = total.expect("batches are non-empty");
            let mean = g.scale(total, 1.0 / batch.len() as f64);
            let batch_loss = g.value(mean).item();
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            g.backward(mean)?;
            for (index, group) in groups.iter().enumerate() {
                // Groups 0 and 1 hold the extractor; skipping them realizes
                // the frozen-feature baseline.
                if cfg.freeze_extractor && index < 2 {
                    continue;
                }
                optimizer.step(group, &mut state.optim[index])?;
            }
            loss_sum += batch_loss * batch.len() as f64;
            n_pairs += batch.len();
        }
        for p in &all_params {
            if !p.tensor().all_finite() {
                return Err(Error::Numeric(format!("non-finite parameter after epoch {epoch}")));
            }
        }

        let mean_loss = loss_sum / n_pairs as f64;
        let accuracy = model_pairwise_accuracy(&model, dataset, &dataset.train_pairs, None)?;
        let stats = EpochStats {
            epoch,
            mean_loss,
            train_accuracy: accuracy.ordered_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        state.loss_history.push(mean_loss);
        state.next_epoch += 1;
        on_epoch(&stats);
        epochs.push(stats);
    }

    let report = TrainReport { freeze_extractor: cfg.freeze_extractor, epochs, checkpoint_path: None };
    Ok(TrainOutcome { model, report, state })
}
