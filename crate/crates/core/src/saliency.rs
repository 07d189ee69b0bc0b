//! Saliency maps: the derivative of the estimated posterior with respect to
//! the two input images, reduced over channels, Gaussian-smoothed, and
//! exported as warm-colormap overlays.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::save_image;
use crate::error::{Error, Result};
use crate::nn::RankModel;
use crate::ranking::posterior_graph;

/// How per-channel gradients collapse to one spatial map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelReduce {
    /// Maximum absolute derivative over channels (the default).
    Max,
    /// Sum of absolute derivatives over channels.
    Sum,
}

impl fmt::Display for ChannelReduce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelReduce::Max => "max",
            ChannelReduce::Sum => "sum",
        })
    }
}

impl FromStr for ChannelReduce {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(ChannelReduce::Max),
            "sum" => Ok(ChannelReduce::Sum),
            other => Err(Error::Contract(format!("unknown channel reduction {other:?} (max, sum)"))),
        }
    }
}

/// Gaussian smoothing parameters: standard deviation in pixels and the
/// truncation radius of the discrete kernel (3σ rounded up by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub radius: usize,
}

impl SmoothingConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Contract(format!("sigma {sigma} must be positive")));
        }
        Ok(SmoothingConfig { sigma, radius: (3.0 * sigma).ceil() as usize })
    }

    pub fn with_radius(sigma: f64, radius: usize) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Contract(format!("sigma {sigma} must be positive")));
        }
        Ok(SmoothingConfig { sigma, radius })
    }

    /// Normalized 1-D kernel; the 2-D kernel is its outer product, so the
    /// discrete weights sum to 1 up to rounding.
    fn kernel(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let mut k: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = k.iter().sum();
        for v in &mut k {
            *v /= total;
        }
        k
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig::new(2.0).expect("default sigma is positive")
    }
}

/// Nonnegative per-pixel saliency magnitudes for one image of a pair, plus
/// the posterior the derivative was taken at.
#[derive(Debug, Clone)]
pub struct SaliencyMap {
    /// Shape `[h, w]`.
    pub map: Tensor,
    pub posterior: f64,
}

/// Raw input gradients of the posterior for a pair: `(|∂p/∂I_i|, |∂p/∂I_j|)`
/// as full `c×h×w` tensors of absolute values, plus the posterior itself.
pub fn raw_input_gradients(model: &RankModel, image_i: &Tensor, image_j: &Tensor) -> Result<(Tensor, Tensor, f64)> {
    let var_i = Var::param(image_i.clone());
    let var_j = Var::param(image_j.clone());
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let leaf_i = g.leaf(&var_i);
    let leaf_j = g.leaf(&var_j);
    let r_i = bound.score(&mut g, leaf_i)?;
    let r_j = bound.score(&mut g, leaf_j)?;
    let p = posterior_graph(&mut g, r_i, r_j)?;
    let p_value = g.value(p).item();
    g.backward(p)?;
    let grad_abs = |v: &Var, shape: &Tensor| -> Tensor {
        let data: Vec<f64> = v.grad_snapshot().expect("image vars track gradients").iter().map(|x| x.abs()).collect();
        Tensor::new(shape.shape(), data).expect("gradient mirrors image shape")
    };
    Ok((grad_abs(&var_i, image_i), grad_abs(&var_j, image_j), p_value))
}

fn reduce_channels(grad: &Tensor, reduce: ChannelReduce) -> Tensor {
    let shape = grad.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for ch in 0..c {
        let src = &grad.data()[ch * plane..(ch + 1) * plane];
        for (o, &v) in out.iter_mut().zip(src) {
            match reduce {
                ChannelReduce::Max => *o = f64::max(*o, v),
                ChannelReduce::Sum => *o += v,
            }
        }
    }
    Tensor::new(&[h, w], out).expect("plane buffer matches shape")
}

/// Computes the pair's saliency maps: backward of the posterior into both
/// image gradient buffers, channel reduction, then Gaussian smoothing.
pub fn saliency_pair(
    model: &RankModel,
    image_i: &Tensor,
    image_j: &Tensor,
    smoothing: &SmoothingConfig,
    reduce: ChannelReduce,
) -> Result<(SaliencyMap, SaliencyMap)> {
    let (grad_i, grad_j, p) = raw_input_gradients(model, image_i, image_j)?;
    let make = |grad: &Tensor| -> Result<SaliencyMap> {
        let map = gaussian_smooth(&reduce_channels(grad, reduce), smoothing)?;
        Ok(SaliencyMap { map, posterior: p })
    };
    Ok((make(&grad_i)?, make(&grad_j)?))
}

/// Separable Gaussian blur with reflect padding at the borders.
pub fn gaussian_smooth(map: &Tensor, cfg: &SmoothingConfig) -> Result<Tensor> {
    let shape = map.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!("gaussian_smooth expects an HxW map, got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let kernel = cfg.kernel();
    let r = cfg.radius as isize;
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        // Edge-inclusive reflection: -1 maps to 0, n maps to n-1.
        while i < 0 || i >= n {
            if i < 0 {
                i = -i - 1;
            }
            if i >= n {
                i = 2 * n - 1 - i;
            }
        }
        i as usize
    };

    // Horizontal pass.
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        let src = &map.data()[row * w..(row + 1) * w];
        for col in 0..w as isize {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let j = reflect(col + ki as isize - r, w as isize);
                acc += kv * src[j];
            }
            tmp[row * w + col as usize] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; h * w];
    for col in 0..w {
        for row in 0..h as isize {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let i = reflect(row + ki as isize - r, h as isize);
                acc += kv * tmp[i * w + col];
            }
            out[row as usize * w + col] = acc;
        }
    }
    Tensor::new(&[h, w], out)
}

/// Five-stop warm colormap from cold blue through green and yellow to red.
fn warm_color(v: f64) -> [f64; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.00, [0.05, 0.05, 0.50]),
        (0.25, [0.00, 0.55, 0.85]),
        (0.50, [0.10, 0.80, 0.25]),
        (0.75, [0.95, 0.85, 0.10]),
        (1.00, [0.90, 0.10, 0.05]),
    ];
    let v = v.clamp(0.0, 1.0);
    for pair in STOPS.windows(2) {
        let (a, ca) = pair[0];
        let (b, cb) = pair[1];
        if v <= b {
            let t = (v - a) / (b - a);
            return [
                ca[0] + t * (cb[0] - ca[0]),
                ca[1] + t * (cb[1] - ca[1]),
                ca[2] + t * (cb[2] - ca[2]),
            ];
        }
    }
    STOPS[4].1
}

/// Blend strength at full saliency; per pixel the weight is `alpha·v`.
const OVERLAY_ALPHA: f64 = 0.6;

/// Writes the base image alpha-blended with a warm colormap of the map,
/// normalized by its maximum. An all-zero map reproduces the base image.
pub fn export_heatmap(map: &Tensor, base: &Tensor, path: &Path) -> Result<()> {
    let mshape = map.shape();
    let bshape = base.shape();
    if mshape.len() != 2 || bshape.len() != 3 || bshape[1] != mshape[0] || bshape[2] != mshape[1] {
        return Err(Error::Shape(format!("map {mshape:?} does not overlay base {bshape:?}")));
    }
    let peak = map.data().iter().cloned().fold(0.0, f64::max);
    let (c, h, w) = (bshape[0], bshape[1], bshape[2]);
    let plane = h * w;
    let mut rgb = vec![0.0; 3 * plane];
    for i in 0..plane {
        let v = if peak > 0.0 { map.data()[i] / peak } else { 0.0 };
        let color = warm_color(v);
        let alpha = OVERLAY_ALPHA * v;
        for ch in 0..3 {
            let base_v = if c == 1 { base.data()[i] } else { base.data()[ch * plane + i] };
            rgb[ch * plane + i] = (1.0 - alpha) * base_v + alpha * color[ch];
        }
    }
    save_image(&Tensor::new(&[3, h, w], rgb)?, path)
}

/// Dumps the raw map as a CSV grid, one row per image row.
pub fn export_csv(map: &Tensor, path: &Path) -> Result<()> {
    let shape = map.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!("export_csv expects an HxW map, got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut file = std::fs::File::create(path)?;
    for row in 0..h {
        let cells: Vec<String> = map.data()[row * w..(row + 1) * w].iter().map(|v| format!("{v}")).collect();
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}
