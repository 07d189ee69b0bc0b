//! Procedural relative-attribute benchmark: images rendered from a latent
//! strength `s ∈ [0, 1]` by a strictly monotone rule, with pair labels
//! derived from the latents. The stored latents are the ground truth that
//! evaluation checks against.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::loader::{save_image, save_pairs};
use crate::data::{ComparisonPair, ImageSample, PairDataset};
use crate::error::{Error, Result};
use crate::ranking::TargetProbability;

/// Latent-strength gap below which a pair is labeled equal (t = 0.5).
pub const EQUALITY_DELTA: f64 = 0.05;

/// Gray level of the empty background / weakest rendering.
const LEVEL_LO: f64 = 0.1;
/// Gray level of the strongest rendering.
const LEVEL_HI: f64 = 0.9;
/// Half-width of the uniform per-pixel speckle on blob images. The blob
/// benchmark is the fine-grained one: its rim signal sits near the noise
/// floor, so reading it rewards learned smoothing filters over raw pixels.
pub const BLOB_SPECKLE: f64 = 0.08;

/// Which monotone rendering maps strength to pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Constant image of intensity `0.1 + 0.8·s`.
    Brightness,
    /// Centered disk whose radius grows with `s`.
    BlobSize,
    /// Fixed-size disk whose center height grows with `s`.
    VerticalPosition,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Brightness => "brightness",
            SyntheticKind::BlobSize => "blob_size",
            SyntheticKind::VerticalPosition => "vertical_position",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(SyntheticKind::Brightness),
            "blob_size" | "blob-size" => Ok(SyntheticKind::BlobSize),
            "vertical_position" | "vertical-position" => Ok(SyntheticKind::VerticalPosition),
            other => Err(Error::Contract(format!(
                "unknown synthetic kind {other:?} (brightness, blob_size, vertical_position)"
            ))),
        }
    }
}

/// Generation parameters. `equality_fraction` is the share of pair slots
/// sampled from the near-equal regime (|s_i − s_j| ≤ δ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_images: usize,
    pub image_size: usize,
    pub n_train_pairs: usize,
    pub n_test_pairs: usize,
    pub equality_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images < 2 {
            return Err(Error::Contract("need at least 2 images to form pairs".into()));
        }
        if self.image_size < 16 {
            return Err(Error::Contract("image size must be at least 16".into()));
        }
        if !(0.0..=1.0).contains(&self.equality_fraction) {
            return Err(Error::Contract(format!(
                "equality fraction {} outside [0, 1]",
                self.equality_fraction
            )));
        }
        Ok(())
    }
}

/// Label rule shared by generation and the relabeling oracle.
pub fn label_from_strengths(s_i: f64, s_j: f64) -> TargetProbability {
    if s_i > s_j + EQUALITY_DELTA {
        TargetProbability::FIRST_OUTRANKS
    } else if s_j > s_i + EQUALITY_DELTA {
        TargetProbability::SECOND_OUTRANKS
    } else {
        TargetProbability::EQUAL
    }
}

/// Disk radius used by the blob rendering at a given strength.
pub fn blob_radius(s: f64, image_size: usize) -> f64 {
    let r_min = 2.0;
    let r_max = image_size as f64 / 4.0;
    r_min + s * (r_max - r_min)
}

/// Inclusive pixel bounds `(row_min, row_max, col_min, col_max)` of the blob
/// rendered at strength `s`, for localization checks.
pub fn blob_bounding_box(s: f64, image_size: usize) -> (usize, usize, usize, usize) {
    let center = (image_size as f64 - 1.0) / 2.0;
    let reach = blob_radius(s, image_size) + 0.5;
    let lo = ((center - reach).floor().max(0.0)) as usize;
    let hi = ((center + reach).ceil() as usize).min(image_size - 1);
    (lo, hi, lo, hi)
}

fn disk(size: usize, cy: f64, cx: f64, radius: f64, amplitude: f64) -> Tensor {
    let mut data = vec![LEVEL_LO; size * size];
    for row in 0..size {
        for col in 0..size {
            let dy = row as f64 - cy;
            let dx = col as f64 - cx;
            let dist = (dy * dy + dx * dx).sqrt();
            // One-pixel antialiased rim keeps coverage smooth in the radius.
            let coverage = (radius + 0.5 - dist).clamp(0.0, 1.0);
            data[row * size + col] = LEVEL_LO + amplitude * coverage;
        }
    }
    Tensor::new(&[1, size, size], data).expect("disk buffer matches shape")
}

/// Renders one image at strength `s`. Strictly monotone in `s` for every kind.
///
/// The blob disk dims as it grows (value ∝ 1/r²) so its total mass stays
/// constant: size has to be read from spatial extent, which keeps blob_size
/// from collapsing into the brightness benchmark.
pub fn render_image(kind: SyntheticKind, s: f64, size: usize) -> Tensor {
    match kind {
        SyntheticKind::Brightness => Tensor::full(&[1, size, size], LEVEL_LO + (LEVEL_HI - LEVEL_LO) * s),
        SyntheticKind::BlobSize => {
            let center = (size as f64 - 1.0) / 2.0;
            let radius = blob_radius(s, size);
            let r_min = blob_radius(0.0, size);
            let amplitude = (LEVEL_HI - LEVEL_LO) * (r_min / radius) * (r_min / radius);
            disk(size, center, center, radius, amplitude)
        }
        SyntheticKind::VerticalPosition => {
            let radius = size as f64 / 8.0;
            let margin = radius + 2.0;
            let cy = margin + s * (size as f64 - 1.0 - 2.0 * margin);
            let cx = (size as f64 - 1.0) / 2.0;
            disk(size, cy, cx, radius, LEVEL_HI - LEVEL_LO)
        }
    }
}

fn image_id(index: usize) -> String {
    format!("img_{index:04}")
}

struct PairSampler<'a> {
    latents: &'a [f64],
    attribute: String,
    equality_fraction: f64,
    forbidden: BTreeSet<(usize, usize)>,
}

impl PairSampler<'_> {
    fn sample(&mut self, rng: &mut ChaCha8Rng, n_pairs: usize, remember: bool) -> Result<Vec<ComparisonPair>> {
        let n = self.latents.len();
        let mut out = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let want_equal = self.equality_fraction > 0.0 && rng.random_bool(self.equality_fraction);
            let mut chosen: Option<(usize, usize)> = None;
            for _attempt in 0..1000 {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i == j || self.forbidden.contains(&(i, j)) {
                    continue;
                }
                let near = (self.latents[i] - self.latents[j]).abs() <= EQUALITY_DELTA;
                if near == want_equal {
                    chosen = Some((i, j));
                    break;
                }
            }
            // Regime-blind fallback keeps generation total when the requested
            // regime is scarce; the label rule below still applies.
            let (i, j) = match chosen {
                Some(p) => p,
                None => self
                    .first_allowed(n)
                    .ok_or_else(|| Error::Data("no admissible pair left to sample".into()))?,
            };
            if remember {
                self.forbidden.insert((i, j));
            }
            out.push(ComparisonPair {
                id_i: image_id(i),
                id_j: image_id(j),
                target: label_from_strengths(self.latents[i], self.latents[j]),
                attribute: self.attribute.clone(),
            });
        }
        Ok(out)
    }

    fn first_allowed(&self, n: usize) -> Option<(usize, usize)> {
        for i in 0..n {
            for j in 0..n {
                if i != j && !self.forbidden.contains(&(i, j)) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// Generates the dataset in memory (exact, unquantized renders).
///
/// Latents are uniform in `[0, 1]`; train pairs are sampled first and test
/// pairs avoid every train (id_i, id_j) combination. Deterministic in the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PairDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latents: Vec<f64> = (0..spec.n_images).map(|_| rng.random_range(0.0..1.0)).collect();

    let mut samples = std::collections::BTreeMap::new();
    for (index, &s) in latents.iter().enumerate() {
        let id = image_id(index);
        let mut pixels = render_image(spec.kind, s, spec.image_size);
        if spec.kind == SyntheticKind::BlobSize {
            for v in pixels.data_mut() {
                *v = (*v + rng.random_range(-BLOB_SPECKLE..BLOB_SPECKLE)).clamp(0.0, 1.0);
            }
        }
        samples.insert(id.clone(), ImageSample { id, pixels, latent_strength: Some(s) });
    }

    let attribute = spec.kind.to_string();
    let mut sampler = PairSampler {
        latents: &latents,
        attribute: attribute.clone(),
        equality_fraction: spec.equality_fraction,
        forbidden: BTreeSet::new(),
    };
    let train_pairs = sampler.sample(&mut rng, spec.n_train_pairs, true)?;
    let test_pairs = sampler.sample(&mut rng, spec.n_test_pairs, false)?;

    let ds = PairDataset { samples, train_pairs, test_pairs, attribute };
    ds.validate()?;
    Ok(ds)
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a SyntheticSpec,
    latent_strength: std::collections::BTreeMap<String, f64>,
}

/// Writes a generated dataset to `dir`: 8-bit PNGs under `images/`, the two
/// pairs CSVs, and `manifest.json` holding the spec and every latent.
pub fn write_dataset(ds: &PairDataset, spec: &SyntheticSpec, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir)?;
    for sample in ds.samples.values() {
        save_image(&sample.pixels, &images_dir.join(format!("{}.png", sample.id)))?;
    }
    save_pairs(&ds.train_pairs, &dir.join("train_pairs.csv"))?;
    save_pairs(&ds.test_pairs, &dir.join("test_pairs.csv"))?;
    let manifest = Manifest { spec, latent_strength: ds.latent_strengths() };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), body + "\n")?;
    Ok(())
}

/// Generates and writes in one step, returning the in-memory dataset.
pub fn generate_to_dir(spec: &SyntheticSpec, dir: &Path) -> Result<PairDataset> {
    let ds = generate_synthetic(spec)?;
    write_dataset(&ds, spec, dir)?;
    Ok(ds)
}
