//! RMSProp with per-parameter-group learning rates and decoupled L2 weight
//! decay. The cache is zero-initialized and there is no bias correction.

use crate::autodiff::Var;
use crate::error::{Error, Result};

/// A set of parameters sharing one learning rate and decay multiplier.
/// Handles alias the model's storage — stepping a group mutates the model.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub params: Vec<Var>,
    pub lr: f64,
    pub weight_decay: f64,
}

impl ParamGroup {
    pub fn new(params: Vec<Var>, lr: f64, weight_decay: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::Contract(format!("learning rate {lr} must be positive")));
        }
        if weight_decay < 0.0 {
            return Err(Error::Contract(format!("weight decay {weight_decay} must be nonnegative")));
        }
        Ok(ParamGroup { params, lr, weight_decay })
    }
}

/// Per-group optimizer state: one running mean-square buffer per parameter,
/// plus a step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub cache: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    /// Zero caches shaped after the group's parameters.
    pub fn for_group(group: &ParamGroup) -> Self {
        OptimState {
            cache: group.params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }
}

/// The RMSProp update rule. `rho` and `epsilon` are shared across groups.
#[derive(Debug, Clone, Copy)]
pub struct RmsProp {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { rho: 0.9, epsilon: 1e-8 }
    }
}

impl RmsProp {
    /// One update over every parameter in the group:
    /// `cache ← rho·cache + (1−rho)·g²` then
    /// `param ← param − lr·g/(√cache + eps) − lr·decay·param`.
    ///
    /// The decay term is applied outside the adaptive scaling (decoupled),
    /// and the gradient fed to the cache is the raw backward output.
    pub fn step(&self, group: &ParamGroup, state: &mut OptimState) -> Result<()> {
        if state.cache.len() != group.params.len() {
            return Err(Error::Contract(format!(
                "optimizer state has {} caches for {} parameters",
                state.cache.len(),
                group.params.len()
            )));
        }
        for (param, cache) in group.params.iter().zip(&mut state.cache) {
            let mut tensor = param.tensor_mut();
            let grad = tensor
                .grad()
                .ok_or_else(|| Error::Contract("parameter does not track gradients".into()))?
                .to_vec();
            if grad.len() != cache.len() {
                return Err(Error::Contract(format!(
                    "gradient length {} does not match cache length {}",
                    grad.len(),
                    cache.len()
                )));
            }
            let data = tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                cache[i] = self.rho * cache[i] + (1.0 - self.rho) * g * g;
                data[i] -= group.lr * g / (cache[i].sqrt() + self.epsilon);
                data[i] -= group.lr * group.weight_decay * data[i];
            }
        }
        state.step += 1;
        Ok(())
    }
}

/// Zeroes the gradient buffer of every handle.
pub fn zero_grads(params: &[Var]) {
    for p in params {
        p.tensor_mut().zero_grad();
    }
}
