//! Network components: a configurable small feature extractor and the linear
//! ranking layer that maps features to a scalar rank estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, ValueId, Var};
use crate::error::{Error, Result};

/// One layer of the feature extractor. Conv and dense layers are always
/// followed by a ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    MaxPool { window: usize, stride: usize },
    Dense { out_dim: usize },
}

/// Shape of the representation flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Spatial { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl FeatureShape {
    pub fn flat_dim(self) -> usize {
        match self {
            FeatureShape::Spatial { channels, height, width } => channels * height * width,
            FeatureShape::Flat(d) => d,
        }
    }
}

/// Architecture of the feature extractor: input image shape plus an ordered
/// layer list. The output is always flattened to a vector of dimension `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractorSpec {
    /// (channels, height, width)
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl FeatureExtractorSpec {
    /// The desk-scale default for 1×32×32 inputs:
    /// conv(8,3×3,s1,p1)+relu → pool(2,2) → conv(16,3×3,s1,p1)+relu →
    /// pool(2,2) → dense(64)+relu, giving d = 64.
    pub fn default_32x32() -> Self {
        FeatureExtractorSpec {
            input: (1, 32, 32),
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3, stride: 1, pad: 1 },
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, pad: 1 },
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Dense { out_dim: 64 },
            ],
        }
    }

    /// A dense-only extractor over flattened pixels, for experiments that
    /// isolate the ranking math from convolution.
    pub fn dense_only(input: (usize, usize, usize), dims: &[usize]) -> Self {
        FeatureExtractorSpec {
            input,
            layers: dims.iter().map(|&d| LayerSpec::Dense { out_dim: d }).collect(),
        }
    }

    /// Runs shape inference over the layer chain, returning the shape after
    /// each layer. Fails when any layer cannot accept its input.
    pub fn layer_shapes(&self) -> Result<Vec<FeatureShape>> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("input shape {:?} has a zero extent", self.input)));
        }
        let mut cur = FeatureShape::Spatial { channels: c, height: h, width: w };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (LayerSpec::Conv { out_channels, kernel, stride, pad }, FeatureShape::Spatial { height, width, .. }) => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Contract(format!("layer {idx}: conv extents must be positive")));
                    }
                    if height + 2 * pad < kernel || width + 2 * pad < kernel {
                        return Err(Error::Shape(format!(
                            "layer {idx}: conv kernel {kernel} exceeds padded input {}x{}",
                            height + 2 * pad,
                            width + 2 * pad
                        )));
                    }
                    FeatureShape::Spatial {
                        channels: out_channels,
                        height: (height + 2 * pad - kernel) / stride + 1,
                        width: (width + 2 * pad - kernel) / stride + 1,
                    }
                }
                (LayerSpec::MaxPool { window, stride }, FeatureShape::Spatial { channels, height, width }) => {
                    if window == 0 || stride == 0 {
                        return Err(Error::Contract(format!("layer {idx}: pool extents must be positive")));
                    }
                    if window > height || window > width {
                        return Err(Error::Shape(format!(
                            "layer {idx}: pool window {window} exceeds input {height}x{width}"
                        )));
                    }
                    FeatureShape::Spatial {
                        channels,
                        height: (height - window) / stride + 1,
                        width: (width - window) / stride + 1,
                    }
                }
                (LayerSpec::Dense { out_dim }, shape) => {
                    if out_dim == 0 {
                        return Err(Error::Contract(format!("layer {idx}: dense output must be positive")));
                    }
                    let _ = shape.flat_dim();
                    FeatureShape::Flat(out_dim)
                }
                (layer, FeatureShape::Flat(_)) => {
                    return Err(Error::Shape(format!(
                        "layer {idx}: {layer:?} cannot follow a flattened representation"
                    )));
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    /// Dimension `d` of the extracted feature vector.
    pub fn output_dim(&self) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        Ok(shapes
            .last()
            .copied()
            .unwrap_or(FeatureShape::Spatial {
                channels: self.input.0,
                height: self.input.1,
                width: self.input.2,
            })
            .flat_dim())
    }

    /// Number of extractor parameters (conv/dense weights and biases).
    pub fn extractor_parameter_count(&self) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        let mut count = 0;
        let mut cur = FeatureShape::Spatial {
            channels: self.input.0,
            height: self.input.1,
            width: self.input.2,
        };
        for (layer, out_shape) in self.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    let c_in = match cur {
                        FeatureShape::Spatial { channels, .. } => channels,
                        FeatureShape::Flat(_) => unreachable!("validated by layer_shapes"),
                    };
                    count += out_channels * c_in * kernel * kernel + out_channels;
                }
                LayerSpec::Dense { out_dim } => {
                    count += out_dim * cur.flat_dim() + out_dim;
                }
                LayerSpec::MaxPool { .. } => {}
            }
            cur = *out_shape;
        }
        Ok(count)
    }

    /// Compact textual form of the layer list, e.g.
    /// `conv:8x3s1p1,pool:2s2,dense:64`.
    pub fn layers_to_string(&self) -> String {
        self.layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv { out_channels, kernel, stride, pad } => {
                    format!("conv:{out_channels}x{kernel}s{stride}p{pad}")
                }
                LayerSpec::MaxPool { window, stride } => format!("pool:{window}s{stride}"),
                LayerSpec::Dense { out_dim } => format!("dense:{out_dim}"),
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Parses the compact layer syntax produced by
/// [`FeatureExtractorSpec::layers_to_string`].
pub fn parse_layers(text: &str) -> Result<Vec<LayerSpec>> {
    fn uint(part: &str, whole: &str) -> Result<usize> {
        part.parse::<usize>()
            .map_err(|_| Error::Contract(format!("bad layer spec {whole:?}: {part:?} is not an integer")))
    }

    let mut layers = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (kind, rest) = item
            .split_once(':')
            .ok_or_else(|| Error::Contract(format!("bad layer spec {item:?}: expected kind:params")))?;
        let layer = match kind {
            "conv" => {
                // <out>x<kernel>s<stride>p<pad>
                let (out, rest) = rest
                    .split_once('x')
                    .ok_or_else(|| Error::Contract(format!("bad layer spec {item:?}")))?;
                let (kernel, rest) = rest
                    .split_once('s')
                    .ok_or_else(|| Error::Contract(format!("bad layer spec {item:?}")))?;
                let (stride, pad) = rest
                    .split_once('p')
                    .ok_or_else(|| Error::Contract(format!("bad layer spec {item:?}")))?;
                LayerSpec::Conv {
                    out_channels: uint(out, item)?,
                    kernel: uint(kernel, item)?,
                    stride: uint(stride, item)?,
                    pad: uint(pad, item)?,
                }
            }
            "pool" => {
                let (window, stride) = rest
                    .split_once('s')
                    .ok_or_else(|| Error::Contract(format!("bad layer spec {item:?}")))?;
                LayerSpec::MaxPool { window: uint(window, item)?, stride: uint(stride, item)? }
            }
            "dense" => LayerSpec::Dense { out_dim: uint(rest, item)? },
            other => return Err(Error::Contract(format!("unknown layer kind {other:?} in {item:?}"))),
        };
        layers.push(layer);
    }
    if layers.is_empty() {
        return Err(Error::Contract("layer spec string is empty".into()));
    }
    Ok(layers)
}

/// Uniform Xavier/Glorot initialization over
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`.
pub fn xavier_init(shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Contract("xavier_init fans must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(xavier_draw(shape, fan_in, fan_out, &mut rng))
}

fn xavier_draw(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("xavier shape is consistent by construction")
}

/// The single linear output unit: `r = w·ψ + b`.
#[derive(Debug, Clone)]
pub struct RankingLayer {
    /// Weight vector of length `d`.
    pub weight: Var,
    /// Scalar bias, initialized to 0.
    pub bias: Var,
}

/// Parameters of one extractor layer.
#[derive(Debug, Clone)]
pub enum LayerParams {
    Conv { weight: Var, bias: Var },
    Dense { weight: Var, bias: Var },
    Pool,
}

/// A full ranking model: extractor parameters plus the ranking layer, along
/// with the spec used to build them.
#[derive(Debug, Clone)]
pub struct RankModel {
    pub spec: FeatureExtractorSpec,
    pub layers: Vec<LayerParams>,
    pub ranker: RankingLayer,
}

impl RankModel {
    /// Builds a model with Xavier-initialized weights and zero biases,
    /// deterministic in `seed`. Draws happen in declaration order.
    pub fn init(spec: &FeatureExtractorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cur = FeatureShape::Spatial {
            channels: spec.input.0,
            height: spec.input.1,
            width: spec.input.2,
        };
        let shapes = spec.layer_shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, out_shape) in spec.layers.iter().zip(&shapes) {
            let params = match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    let c_in = match cur {
                        FeatureShape::Spatial { channels, .. } => channels,
                        FeatureShape::Flat(_) => unreachable!("validated by layer_shapes"),
                    };
                    let fan_in = c_in * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    let w = xavier_draw(&[out_channels, c_in, kernel, kernel], fan_in, fan_out, &mut rng);
                    LayerParams::Conv {
                        weight: Var::param(w),
                        bias: Var::param(Tensor::zeros(&[out_channels])),
                    }
                }
                LayerSpec::Dense { out_dim } => {
                    let in_dim = cur.flat_dim();
                    let w = xavier_draw(&[out_dim, in_dim], in_dim, out_dim, &mut rng);
                    LayerParams::Dense {
                        weight: Var::param(w),
                        bias: Var::param(Tensor::zeros(&[out_dim])),
                    }
                }
                LayerSpec::MaxPool { .. } => LayerParams::Pool,
            };
            layers.push(params);
            cur = *out_shape;
        }
        let d = spec.output_dim()?;
        let ranker = RankingLayer {
            weight: Var::param(xavier_draw(&[d], d, 1, &mut rng)),
            bias: Var::param(Tensor::zeros(&[1])),
        };
        Ok(RankModel { spec: spec.clone(), layers, ranker })
    }

    /// All parameters in declaration order: per layer weight then bias,
    /// finally ranking weight and bias. This order defines the checkpoint
    /// layout and the optimizer cache layout.
    pub fn parameters(&self) -> Vec<Var> {
        let mut out = self.extractor_parameters();
        out.push(self.ranker.weight.clone());
        out.push(self.ranker.bias.clone());
        out
    }

    pub fn extractor_parameters(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(weight.clone());
                    out.push(bias.clone());
                }
                LayerParams::Pool => {}
            }
        }
        out
    }

    /// Extractor parameters split into (weights, biases), preserving layer order.
    pub fn extractor_weights_and_biases(&self) -> (Vec<Var>, Vec<Var>) {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    weights.push(weight.clone());
                    biases.push(bias.clone());
                }
                LayerParams::Pool => {}
            }
        }
        (weights, biases)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Var::numel).sum()
    }

    /// Concatenated parameter values in declaration order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for p in self.parameters() {
            out.extend_from_slice(p.tensor().data());
        }
        out
    }

    /// Overwrites all parameters from a flat buffer in declaration order.
    pub fn set_flat_parameters(&self, values: &[f64]) -> Result<()> {
        let expect = self.parameter_count();
        if values.len() != expect {
            return Err(Error::Contract(format!(
                "parameter buffer holds {} values, model needs {expect}",
                values.len()
            )));
        }
        let mut offset = 0;
        for p in self.parameters() {
            let n = p.numel();
            p.tensor_mut().data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Records every parameter as a leaf on `g`, once. Both images of a pair
    /// must be scored through the same binding so that the branches share
    /// weights structurally.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let layers = self
            .layers
            .iter()
            .zip(&self.spec.layers)
            .map(|(params, spec)| match (params, *spec) {
                (LayerParams::Conv { weight, bias }, LayerSpec::Conv { stride, pad, .. }) => {
                    BoundLayer::Conv { weight: g.leaf(weight), bias: g.leaf(bias), stride, pad }
                }
                (LayerParams::Dense { weight, bias }, LayerSpec::Dense { .. }) => {
                    BoundLayer::Dense { weight: g.leaf(weight), bias: g.leaf(bias) }
                }
                (LayerParams::Pool, LayerSpec::MaxPool { window, stride }) => {
                    BoundLayer::Pool { window, stride }
                }
                _ => unreachable!("layer params always mirror the spec"),
            })
            .collect();
        BoundModel {
            input: self.spec.input,
            output_dim: self.spec.output_dim().expect("spec validated at init"),
            layers,
            weight: g.leaf(&self.ranker.weight),
            bias: g.leaf(&self.ranker.bias),
        }
    }

    /// Feature vector ψ ∈ ℝ^d for one image.
    pub fn extract_features(&self, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let img = g.constant(image.clone());
        let psi = bound.features(&mut g, img)?;
        Ok(g.value(psi).clone())
    }

    /// Scalar rank estimate `r = w·ψ + b` for one image.
    pub fn rank_score(&self, image: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let img = g.constant(image.clone());
        let r = bound.score(&mut g, img)?;
        Ok(g.value(r).item())
    }
}

enum BoundLayer {
    Conv { weight: ValueId, bias: ValueId, stride: usize, pad: usize },
    Dense { weight: ValueId, bias: ValueId },
    Pool { window: usize, stride: usize },
}

/// A model whose parameters have been recorded as leaves on one graph.
pub struct BoundModel {
    input: (usize, usize, usize),
    output_dim: usize,
    layers: Vec<BoundLayer>,
    weight: ValueId,
    bias: ValueId,
}

impl BoundModel {
    /// Runs the extractor over an image value already on the graph.
    pub fn features(&self, g: &mut Graph, image: ValueId) -> Result<ValueId> {
        let got = g.value(image).shape().to_vec();
        let want = [self.input.0, self.input.1, self.input.2];
        if got != want {
            return Err(Error::Shape(format!("image shape {got:?}, extractor expects {want:?}")));
        }
        let mut cur = image;
        for layer in &self.layers {
            cur = match *layer {
                BoundLayer::Conv { weight, bias, stride, pad } => {
                    let c = g.conv2d(cur, weight, stride, pad)?;
                    let cb = g.channel_bias(c, bias)?;
                    g.relu(cb)
                }
                BoundLayer::Pool { window, stride } => g.maxpool2d(cur, window, stride)?,
                BoundLayer::Dense { weight, bias } => {
                    let in_dim = g.value(cur).numel();
                    let col = g.reshape(cur, &[in_dim, 1])?;
                    let y = g.matmul(weight, col)?;
                    let out_dim = g.value(y).shape()[0];
                    let flat = g.reshape(y, &[out_dim])?;
                    let yb = g.add(flat, bias)?;
                    g.relu(yb)
                }
            };
        }
        let d = g.value(cur).numel();
        g.reshape(cur, &[d])
    }

    /// Rank estimate as a scalar value on the graph.
    pub fn score(&self, g: &mut Graph, image: ValueId) -> Result<ValueId> {
        let psi = self.features(g, image)?;
        let col = g.reshape(psi, &[self.output_dim, 1])?;
        let row = g.reshape(self.weight, &[1, self.output_dim])?;
        let prod = g.matmul(row, col)?;
        let r = g.reshape(prod, &[1])?;
        g.add(r, self.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn xavier_bound_symmetry() {
        // fan_in == fan_out == f gives bound sqrt(3/f).
        let t = xavier_init(&[10_000], 100, 100, 42).unwrap();
        let bound = (3.0f64 / 100.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn xavier_sample_statistics() {
        let t = xavier_init(&[10_000], 100, 100, 7).unwrap();
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        let expect = 2.0 / 200.0;
        assert!((var - expect).abs() < 0.1 * expect, "var {var}");
    }

    #[test]
    fn xavier_is_deterministic_in_seed() {
        let a = xavier_init(&[64], 32, 16, 5).unwrap();
        let b = xavier_init(&[64], 32, 16, 5).unwrap();
        assert_eq!(a, b);
        let c = xavier_init(&[64], 32, 16, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_spec_shapes_and_parameter_count() {
        let spec = FeatureExtractorSpec::default_32x32();
        assert_eq!(spec.output_dim().unwrap(), 64);
        // conv: 8·1·9+8, conv: 16·8·9+16, dense: 64·1024+64
        assert_eq!(spec.extractor_parameter_count().unwrap(), 80 + 1168 + 65600);
        let model = RankModel::init(&spec, 1).unwrap();
        assert_eq!(model.parameter_count(), 80 + 1168 + 65600 + 64 + 1);
    }

    #[test]
    fn ranker_bias_initializes_to_zero() {
        let model = RankModel::init(&FeatureExtractorSpec::default_32x32(), 3).unwrap();
        assert_eq!(model.ranker.bias.snapshot(), vec![0.0]);
    }

    #[test]
    fn zero_image_through_relu_net_gives_zero_features() {
        let spec = FeatureExtractorSpec::default_32x32();
        let model = RankModel::init(&spec, 2).unwrap();
        let psi = model.extract_features(&Tensor::zeros(&[1, 32, 32])).unwrap();
        assert!(psi.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn features_are_deterministic() {
        let spec = FeatureExtractorSpec::default_32x32();
        let model = RankModel::init(&spec, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Tensor::new(&[1, 32, 32], (0..1024).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let a = model.extract_features(&img).unwrap();
        let b = model.extract_features(&img).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_dense_layer_matches_matrix_oracle() {
        let spec = FeatureExtractorSpec::dense_only((1, 2, 2), &[3]);
        let model = RankModel::init(&spec, 11).unwrap();
        let x = vec![0.25, 0.5, 0.75, 1.0];
        let img = Tensor::new(&[1, 2, 2], x.clone()).unwrap();
        let psi = model.extract_features(&img).unwrap();

        let (w, b) = match &model.layers[0] {
            LayerParams::Dense { weight, bias } => (weight.snapshot(), bias.snapshot()),
            _ => unreachable!(),
        };
        for row in 0..3 {
            let mut acc = b[row];
            for col in 0..4 {
                acc += w[row * 4 + col] * x[col];
            }
            let expect = acc.max(0.0);
            assert!((psi.data()[row] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_score_edge_cases_and_dot_oracle() {
        let spec = FeatureExtractorSpec::dense_only((1, 2, 2), &[4]);
        let model = RankModel::init(&spec, 13).unwrap();
        let img = Tensor::new(&[1, 2, 2], vec![0.1, 0.9, 0.4, 0.6]).unwrap();

        // w = 0, b = 0 → r = 0 for any image.
        model.ranker.weight.tensor_mut().data_mut().fill(0.0);
        assert_eq!(model.rank_score(&img).unwrap(), 0.0);

        // w = e1 → r = ψ_1.
        model.ranker.weight.tensor_mut().data_mut()[0] = 1.0;
        let psi = model.extract_features(&img).unwrap();
        assert!((model.rank_score(&img).unwrap() - psi.data()[0]).abs() < 1e-15);

        // Random w: r matches the dot-product oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for v in model.ranker.weight.tensor_mut().data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let w = model.ranker.weight.snapshot();
        let oracle: f64 = w.iter().zip(psi.data()).map(|(a, b)| a * b).sum();
        assert!((model.rank_score(&img).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn bias_shift_moves_scores_but_not_differences() {
        let spec = FeatureExtractorSpec::default_32x32();
        let model = RankModel::init(&spec, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let img_a = Tensor::new(&[1, 32, 32], (0..1024).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let img_b = Tensor::new(&[1, 32, 32], (0..1024).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();

        let ra = model.rank_score(&img_a).unwrap();
        let rb = model.rank_score(&img_b).unwrap();
        let c = 5.5;
        model.ranker.bias.tensor_mut().data_mut()[0] += c;
        let ra2 = model.rank_score(&img_a).unwrap();
        let rb2 = model.rank_score(&img_b).unwrap();

        assert!((ra2 - ra - c).abs() < 1e-12, "Lipschitz-1 shift in b");
        assert!(((ra2 - rb2) - (ra - rb)).abs() < 1e-12, "differences unchanged");
    }

    #[test]
    fn wrong_input_shape_is_a_dimension_error() {
        let model = RankModel::init(&FeatureExtractorSpec::default_32x32(), 1).unwrap();
        let img = Tensor::zeros(&[1, 16, 16]);
        assert!(matches!(model.extract_features(&img), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_string_round_trip() {
        let spec = FeatureExtractorSpec::default_32x32();
        let text = spec.layers_to_string();
        assert_eq!(text, "conv:8x3s1p1,pool:2s2,conv:16x3s1p1,pool:2s2,dense:64");
        assert_eq!(parse_layers(&text).unwrap(), spec.layers);
        assert!(parse_layers("dense:abc").is_err());
        assert!(parse_layers("swish:3").is_err());
        assert!(parse_layers("").is_err());
    }

    #[test]
    fn invalid_chains_fail_shape_inference() {
        // Pool after dense.
        let spec = FeatureExtractorSpec {
            input: (1, 4, 4),
            layers: vec![LayerSpec::Dense { out_dim: 4 }, LayerSpec::MaxPool { window: 2, stride: 2 }],
        };
        assert!(spec.validate().is_err());
        // Pool window larger than the image.
        let spec = FeatureExtractorSpec {
            input: (1, 4, 4),
            layers: vec![LayerSpec::MaxPool { window: 5, stride: 1 }],
        };
        assert!(spec.validate().is_err());
    }
}
