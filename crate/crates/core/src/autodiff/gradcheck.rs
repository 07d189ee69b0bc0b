//! Finite-difference verification of recorded gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::graph::{Graph, ValueId};
use crate::autodiff::tensor::Var;
use crate::error::{Error, Result};

/// Settings for a gradient check run.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Per-parameter maximum relative error allowed.
    pub tolerance: f64,
    /// Check at most this many elements per parameter tensor (random subset);
    /// `None` checks every element.
    pub max_elements_per_param: Option<usize>,
    /// Seed for the element subsampling above.
    pub sample_seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, tolerance: 1e-4, max_elements_per_param: None, sample_seed: 0 }
    }
}

/// Relative error between an analytic and a numeric gradient element.
///
/// The denominator is floored so that elements whose true gradient is below
/// the floor are compared in (scaled) absolute terms; finite differences
/// carry ~1e-11 of rounding noise that would otherwise dominate the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-4;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Outcome for one checked parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked_elements: usize,
    /// Element index with the largest error, with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
}

/// Full gradient-check report; failures are carried, not raised.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares the recorded gradient of a deterministic scalar fragment against
/// central finite differences, per parameter.
///
/// `build` must reconstruct the same computation from the current values of
/// `params` on every call.
pub fn gradcheck<F>(params: &[(String, Var)], build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<ValueId>,
{
    let eval = |g: &mut Graph| -> Result<f64> {
        let loss = build(g)?;
        let v = g.value(loss);
        if !v.is_scalar() {
            return Err(Error::Contract(format!(
                "gradcheck fragment must produce a scalar, got shape {:?}",
                v.shape()
            )));
        }
        Ok(v.item())
    };

    // Analytic pass.
    for (_, var) in params {
        var.tensor_mut().zero_grad();
    }
    let mut g = Graph::new();
    let loss = build(&mut g)?;
    if !g.value(loss).is_scalar() {
        return Err(Error::Contract(format!(
            "gradcheck fragment must produce a scalar, got shape {:?}",
            g.value(loss).shape()
        )));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(name, var)| {
            var.grad_snapshot()
                .ok_or_else(|| Error::Contract(format!("parameter {name} does not track gradients")))
        })
        .collect::<Result<_>>()?;

    // Numeric pass, element by element.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let mut checks = Vec::with_capacity(params.len());
    for (p, (name, var)) in params.iter().enumerate() {
        let numel = var.numel();
        let indices: Vec<usize> = match cfg.max_elements_per_param {
            Some(k) if numel > k => {
                let mut picked = rand::seq::index::sample(&mut rng, numel, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..numel).collect(),
        };

        let mut worst: Option<(usize, f64, f64)> = None;
        let mut max_err = 0.0f64;
        for &i in &indices {
            let original = var.tensor().data()[i];
            var.tensor_mut().data_mut()[i] = original + cfg.step;
            let mut gp = Graph::new();
            let plus = eval(&mut gp)?;
            var.tensor_mut().data_mut()[i] = original - cfg.step;
            let mut gm = Graph::new();
            let minus = eval(&mut gm)?;
            var.tensor_mut().data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(analytic[p][i], numeric);
            if err >= max_err {
                max_err = err;
                worst = Some((i, analytic[p][i], numeric));
            }
        }
        checks.push(ParamCheck {
            name: name.clone(),
            max_rel_error: max_err,
            checked_elements: indices.len(),
            worst,
        });
    }

    Ok(GradCheckReport { params: checks, tolerance: cfg.tolerance })
}
