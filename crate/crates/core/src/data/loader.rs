//! Reading and writing datasets on disk: PNG images, CSV pairs files, and
//! the generator manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView};

use crate::autodiff::Tensor;
use crate::data::{ComparisonPair, ImageSample, PairDataset};
use crate::error::{Error, Result};
use crate::ranking::TargetProbability;

/// Expected header of a pairs CSV.
pub const PAIRS_HEADER: [&str; 4] = ["image_i", "image_j", "target", "attribute"];

/// Image-shape policy applied while loading.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Required image shape `(c, h, w)`. When `None`, the first decoded
    /// image fixes the shape for the rest of the dataset.
    pub expected_shape: Option<(usize, usize, usize)>,
    /// Rescale mismatched images (nearest-neighbor) instead of rejecting them.
    pub resize: bool,
}

/// Decodes one PNG into a `c×h×w` tensor in `[0, 1]`. Grayscale files load
/// as one channel, anything else as RGB.
pub fn load_image(path: &Path, opts: &LoadOptions) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot decode image {}: {e}", path.display())))?;
    decode_image(img, path, opts)
}

fn decode_image(mut img: DynamicImage, path: &Path, opts: &LoadOptions) -> Result<Tensor> {
    let gray = matches!(img.color(), image::ColorType::L8 | image::ColorType::L16);
    if let Some((c, h, w)) = opts.expected_shape {
        let (got_w, got_h) = img.dimensions();
        if (got_h as usize, got_w as usize) != (h, w) {
            if opts.resize {
                img = img.resize_exact(w as u32, h as u32, FilterType::Nearest);
            } else {
                return Err(Error::Data(format!(
                    "image {} is {}x{}, dataset expects {}x{} (pass resize to rescale)",
                    path.display(),
                    got_h,
                    got_w,
                    h,
                    w
                )));
            }
        }
        let want_gray = c == 1;
        if want_gray != gray && !opts.resize {
            return Err(Error::Data(format!(
                "image {} has {} channels, dataset expects {c}",
                path.display(),
                if gray { 1 } else { 3 }
            )));
        }
        return Ok(image_to_tensor(&img, want_gray));
    }
    Ok(image_to_tensor(&img, gray))
}

fn image_to_tensor(img: &DynamicImage, gray: bool) -> Tensor {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    if gray {
        let buf = img.to_luma8();
        let data: Vec<f64> = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Tensor::new(&[1, h, w], data).expect("luma buffer matches dimensions")
    } else {
        let buf = img.to_rgb8();
        let raw = buf.as_raw();
        let mut data = vec![0.0; 3 * h * w];
        for i in 0..h * w {
            for c in 0..3 {
                data[c * h * w + i] = raw[i * 3 + c] as f64 / 255.0;
            }
        }
        Tensor::new(&[3, h, w], data).expect("rgb buffer matches dimensions")
    }
}

/// Writes a `[0,1]` tensor back to PNG (8-bit gray or RGB by channel count).
pub fn save_image(pixels: &Tensor, path: &Path) -> Result<()> {
    let shape = pixels.shape();
    if shape.len() != 3 || (shape[0] != 1 && shape[0] != 3) {
        return Err(Error::Shape(format!("save_image expects 1xHxW or 3xHxW, got {shape:?}")));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if c == 1 {
        let buf: Vec<u8> = pixels.data().iter().map(|&v| quantize(v)).collect();
        image::GrayImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer sized from shape")
            .save(path)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
    } else {
        let plane = h * w;
        let mut buf = vec![0u8; 3 * plane];
        for i in 0..plane {
            for ch in 0..3 {
                buf[i * 3 + ch] = quantize(pixels.data()[ch * plane + i]);
            }
        }
        image::RgbImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer sized from shape")
            .save(path)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
    }
}

fn id_and_filename(cell: &str) -> (String, String) {
    match cell.strip_suffix(".png") {
        Some(stem) => (stem.to_string(), cell.to_string()),
        None => (cell.to_string(), format!("{cell}.png")),
    }
}

/// Parses one pairs CSV. Rows are `image_i,image_j,target,attribute` with a
/// header line; image cells name PNG files in the images directory and the
/// file stem is the image id.
fn read_pairs_file(path: &Path) -> Result<Vec<(ComparisonPair, String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open pairs file {}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != PAIRS_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header {got:?}, expected {PAIRS_HEADER:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::Parse { line, msg: format!("expected 4 fields, got {}", record.len()) });
        }
        let (id_i, file_i) = id_and_filename(&record[0]);
        let (id_j, file_j) = id_and_filename(&record[1]);
        let raw_t: f64 = record[2]
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("target {:?} is not a number", &record[2]) })?;
        let target = TargetProbability::new(raw_t)
            .map_err(|_| Error::Data(format!("line {line}: target {raw_t} is not one of 0, 0.5, 1")))?;
        let pair = ComparisonPair { id_i, id_j, target, attribute: record[3].to_string() };
        out.push((pair, file_i, file_j));
    }
    Ok(out)
}

/// Writes pairs in the CSV format accepted by [`load_pairs`].
pub fn save_pairs(pairs: &[ComparisonPair], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))?;
    writer
        .write_record(PAIRS_HEADER)
        .and_then(|_| {
            for p in pairs {
                writer.write_record([
                    format!("{}.png", p.id_i).as_str(),
                    format!("{}.png", p.id_j).as_str(),
                    format_target(p.target).as_str(),
                    p.attribute.as_str(),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn format_target(t: TargetProbability) -> String {
    // Fixed one-decimal form so files are byte-stable.
    format!("{:.1}", t.value())
}

fn load_referenced_images(
    images_dir: &Path,
    files: impl IntoIterator<Item = (String, String)>,
    opts: &LoadOptions,
) -> Result<BTreeMap<String, ImageSample>> {
    let mut samples = BTreeMap::new();
    let mut effective = *opts;
    for (id, file) in files {
        if samples.contains_key(&id) {
            continue;
        }
        let path = images_dir.join(&file);
        if !path.is_file() {
            return Err(Error::Data(format!("missing image id {id:?} (no file {})", path.display())));
        }
        let pixels = load_image(&path, &effective)?;
        if effective.expected_shape.is_none() {
            let s = pixels.shape();
            effective.expected_shape = Some((s[0], s[1], s[2]));
        }
        samples.insert(id.clone(), ImageSample { id, pixels, latent_strength: None });
    }
    Ok(samples)
}

fn dataset_attribute(pairs: &[ComparisonPair]) -> Result<String> {
    let Some(first) = pairs.first() else { return Ok(String::new()) };
    for p in pairs {
        if p.attribute != first.attribute {
            return Err(Error::Data(format!(
                "pairs file mixes attributes {:?} and {:?}; one attribute per dataset",
                first.attribute, p.attribute
            )));
        }
    }
    Ok(first.attribute.clone())
}

/// Loads one pairs file plus the images it references. The pairs land in the
/// train split; use [`load_dataset`] for a directory with both splits.
pub fn load_pairs(images_dir: &Path, pairs_file: &Path) -> Result<PairDataset> {
    load_pairs_with(images_dir, pairs_file, &LoadOptions::default())
}

pub fn load_pairs_with(images_dir: &Path, pairs_file: &Path, opts: &LoadOptions) -> Result<PairDataset> {
    let rows = read_pairs_file(pairs_file)?;
    let samples = load_referenced_images(
        images_dir,
        rows.iter()
            .flat_map(|(p, fi, fj)| [(p.id_i.clone(), fi.clone()), (p.id_j.clone(), fj.clone())]),
        opts,
    )?;
    let train_pairs: Vec<ComparisonPair> = rows.into_iter().map(|(p, _, _)| p).collect();
    let ds = PairDataset {
        attribute: dataset_attribute(&train_pairs)?,
        samples,
        train_pairs,
        test_pairs: Vec::new(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Loads a dataset directory: `images/*.png`, `train_pairs.csv`, an optional
/// `test_pairs.csv`, and an optional generator `manifest.json` supplying
/// ground-truth latent strengths. All images in the directory are loaded,
/// referenced or not, so global rankings cover the full collection.
pub fn load_dataset(dir: &Path, opts: &LoadOptions) -> Result<PairDataset> {
    let images_dir = dir.join("images");
    let train_file = dir.join("train_pairs.csv");
    if !train_file.is_file() {
        return Err(Error::Data(format!("no train_pairs.csv under {}", dir.display())));
    }
    let train_rows = read_pairs_file(&train_file)?;
    let test_file = dir.join("test_pairs.csv");
    let test_rows = if test_file.is_file() { read_pairs_file(&test_file)? } else { Vec::new() };

    // Every PNG in the images directory, in name order.
    let mut all_files: Vec<(String, String)> = Vec::new();
    if images_dir.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&images_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".png"))
            .collect();
        names.sort();
        all_files.extend(names.into_iter().map(|n| {
            let (id, file) = id_and_filename(&n);
            (id, file)
        }));
    }
    all_files.extend(
        train_rows
            .iter()
            .chain(&test_rows)
            .flat_map(|(p, fi, fj)| [(p.id_i.clone(), fi.clone()), (p.id_j.clone(), fj.clone())]),
    );

    let mut samples = load_referenced_images(&images_dir, all_files, opts)?;

    let manifest_file = dir.join("manifest.json");
    if manifest_file.is_file() {
        let text = fs::read_to_string(&manifest_file)?;
        let manifest: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("malformed manifest.json: {e}")))?;
        if let Some(latents) = manifest.get("latent_strength").and_then(|v| v.as_object()) {
            for (id, value) in latents {
                if let (Some(sample), Some(s)) = (samples.get_mut(id.as_str()), value.as_f64()) {
                    sample.latent_strength = Some(s);
                }
            }
        }
    }

    let train_pairs: Vec<ComparisonPair> = train_rows.into_iter().map(|(p, _, _)| p).collect();
    let test_pairs: Vec<ComparisonPair> = test_rows.into_iter().map(|(p, _, _)| p).collect();
    let mut all = train_pairs.clone();
    all.extend(test_pairs.iter().cloned());
    let ds = PairDataset {
        attribute: dataset_attribute(&all)?,
        samples,
        train_pairs,
        test_pairs,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(path: &Path, body: &str) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    fn gray_png(path: &Path, size: usize, value: f64) {
        save_image(&Tensor::full(&[1, size, size], value), path).unwrap();
    }

    #[test]
    fn empty_pairs_file_loads_as_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\n");
        let ds = load_pairs(&images, &pairs).unwrap();
        assert!(ds.train_pairs.is_empty());
        assert!(ds.samples.is_empty());
    }

    #[test]
    fn direct_row_parse() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        gray_png(&images.join("a.png"), 4, 0.5);
        gray_png(&images.join("b.png"), 4, 0.25);
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\na.png,b.png,1.0,pointy\n");
        let ds = load_pairs(&images, &pairs).unwrap();
        assert_eq!(ds.train_pairs.len(), 1);
        let p = &ds.train_pairs[0];
        assert_eq!((p.id_i.as_str(), p.id_j.as_str()), ("a", "b"));
        assert_eq!(p.target, TargetProbability::FIRST_OUTRANKS);
        assert_eq!(p.attribute, "pointy");
        assert_eq!(ds.attribute, "pointy");
    }

    #[test]
    fn save_then_load_round_trips_pairs_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        for id in ["x", "y", "z"] {
            gray_png(&images.join(format!("{id}.png")), 4, 0.5);
        }
        let pairs = vec![
            ComparisonPair { id_i: "x".into(), id_j: "y".into(), target: TargetProbability::FIRST_OUTRANKS, attribute: "big".into() },
            ComparisonPair { id_i: "y".into(), id_j: "z".into(), target: TargetProbability::EQUAL, attribute: "big".into() },
            ComparisonPair { id_i: "z".into(), id_j: "x".into(), target: TargetProbability::SECOND_OUTRANKS, attribute: "big".into() },
        ];
        let file = dir.path().join("pairs.csv");
        save_pairs(&pairs, &file).unwrap();
        let ds = load_pairs(&images, &file).unwrap();
        assert_eq!(ds.train_pairs, pairs);
    }

    #[test]
    fn missing_image_error_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        gray_png(&images.join("a.png"), 4, 0.5);
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\na.png,ghost.png,1.0,attr\n");
        let err = load_pairs(&images, &pairs).unwrap_err();
        assert!(err.to_string().contains("ghost"), "got: {err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\na.png,b.png,not_a_number,attr\n");
        match load_pairs(&images, &pairs) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_target_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        gray_png(&images.join("a.png"), 4, 0.5);
        gray_png(&images.join("b.png"), 4, 0.5);
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\na.png,b.png,0.7,attr\n");
        assert!(matches!(load_pairs(&images, &pairs), Err(Error::Data(_))));
    }

    #[test]
    fn mismatched_image_sizes_are_rejected_unless_resizing() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        gray_png(&images.join("a.png"), 4, 0.5);
        gray_png(&images.join("b.png"), 8, 0.5);
        let pairs = dir.path().join("pairs.csv");
        write_file(&pairs, "image_i,image_j,target,attribute\na.png,b.png,1.0,attr\n");
        assert!(load_pairs(&images, &pairs).is_err());
        let opts = LoadOptions { expected_shape: Some((1, 4, 4)), resize: true };
        let ds = load_pairs_with(&images, &pairs, &opts).unwrap();
        assert_eq!(ds.samples["b"].pixels.shape(), &[1, 4, 4]);
    }

    #[test]
    fn png_round_trip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let t = Tensor::new(&[1, 2, 2], vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        save_image(&t, &path).unwrap();
        let back = load_image(&path, &LoadOptions::default()).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
