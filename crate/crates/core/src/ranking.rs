//! Ranking mathematics: the logistic posterior over a pair of rank
//! estimates, the binary cross-entropy ranking loss with posterior clipping,
//! and the squared regression loss kept as a contrast baseline.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph, Tensor, ValueId};
use crate::error::{Error, Result};
use crate::nn::{BoundModel, RankModel};

/// Supervision value for one pair: 1 means the first image outranks the
/// second, 0 the reverse, and 0.5 equal strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TargetProbability(f64);

impl TargetProbability {
    pub const FIRST_OUTRANKS: TargetProbability = TargetProbability(1.0);
    pub const EQUAL: TargetProbability = TargetProbability(0.5);
    pub const SECOND_OUTRANKS: TargetProbability = TargetProbability(0.0);

    /// Accepts exactly 0, 0.5, or 1.
    pub fn new(t: f64) -> Result<Self> {
        if t == 0.0 || t == 0.5 || t == 1.0 {
            Ok(TargetProbability(t))
        } else {
            Err(Error::Contract(format!("target probability {t} is not one of 0, 0.5, 1")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The target seen by the swapped pair: t ↦ 1 − t.
    pub fn complement(self) -> Self {
        TargetProbability(1.0 - self.0)
    }
}

impl<'de> Deserialize<'de> for TargetProbability {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = f64::deserialize(de)?;
        TargetProbability::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Clipping bounds applied to the posterior before the logarithm, keeping
/// the loss finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        PosteriorConfig { clip_lo: 1e-7, clip_hi: 1.0 - 1e-7 }
    }
}

impl PosteriorConfig {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.clip_lo && self.clip_lo < 0.5 && 0.5 < self.clip_hi && self.clip_hi < 1.0 {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "clip bounds ({}, {}) must satisfy 0 < lo < 0.5 < hi < 1",
                self.clip_lo, self.clip_hi
            )))
        }
    }
}

/// Posterior probability that the first rank estimate outranks the second:
/// `p = 1 / (1 + exp(-(r_i - r_j)))`. Depends only on the difference.
pub fn posterior(r_i: f64, r_j: f64) -> f64 {
    sigmoid(r_i - r_j)
}

/// Binary cross-entropy ranking loss with the posterior clipped into
/// `[clip_lo, clip_hi]` before the logarithms.
pub fn ranking_loss(p: f64, t: TargetProbability, cfg: &PosteriorConfig) -> f64 {
    let p = p.clamp(cfg.clip_lo, cfg.clip_hi);
    let t = t.value();
    -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
}

/// Squared loss on the raw score difference: `((r_i - r_j) - t)^2`. Kept as
/// the regression contrast to the ranking loss; it penalizes over-estimation
/// where the ranking loss keeps rewarding it.
pub fn regression_loss(r_i: f64, r_j: f64, t: TargetProbability) -> f64 {
    let d = (r_i - r_j) - t.value();
    d * d
}

/// Posterior node for two scalar score values already on the graph.
pub fn posterior_graph(g: &mut Graph, r_i: ValueId, r_j: ValueId) -> Result<ValueId> {
    let diff = g.sub(r_i, r_j)?;
    Ok(g.sigmoid(diff))
}

/// Ranking loss node for a posterior value already on the graph.
pub fn ranking_loss_graph(
    g: &mut Graph,
    p: ValueId,
    t: TargetProbability,
    cfg: &PosteriorConfig,
) -> Result<ValueId> {
    cfg.validate()?;
    let clipped = g.clip(p, cfg.clip_lo, cfg.clip_hi)?;
    let one = g.scalar(1.0);
    let complement = g.sub(one, clipped)?;
    let log_p = g.log(clipped)?;
    let log_q = g.log(complement)?;
    let lhs = g.scale(log_p, -t.value());
    let rhs = g.scale(log_q, -(1.0 - t.value()));
    g.add(lhs, rhs)
}

/// Full differentiable pair loss over a bound model: both images are scored
/// through the same parameter leaves (shared weights), combined into the
/// posterior and the clipped cross-entropy.
pub fn pair_loss_graph(
    g: &mut Graph,
    bound: &BoundModel,
    image_i: ValueId,
    image_j: ValueId,
    t: TargetProbability,
    cfg: &PosteriorConfig,
) -> Result<ValueId> {
    let r_i = bound.score(g, image_i)?;
    let r_j = bound.score(g, image_j)?;
    let p = posterior_graph(g, r_i, r_j)?;
    ranking_loss_graph(g, p, t, cfg)
}

/// Convenience evaluation of the pair loss for two image tensors.
pub fn pair_loss(
    model: &RankModel,
    image_i: &Tensor,
    image_j: &Tensor,
    t: TargetProbability,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let a = g.constant(image_i.clone());
    let b = g.constant(image_j.clone());
    let loss = pair_loss_graph(&mut g, &bound, a, b, t, cfg)?;
    Ok(g.value(loss).item())
}
