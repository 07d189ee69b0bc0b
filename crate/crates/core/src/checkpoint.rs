//! Versioned binary checkpoints: magic, format version, the serialized
//! extractor spec, every parameter as little-endian f64 in declaration
//! order, then the training state (seed, epoch, loss history, optimizer
//! caches). A sidecar text manifest mirrors seed/epoch/loss history for
//! human inspection; the binary file is the authority on load.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{FeatureExtractorSpec, RankModel};
use crate::optim::OptimState;

const MAGIC: &[u8; 8] = b"ATRKCKPT";
const FORMAT_VERSION: u32 = 1;

/// Mutable training context carried across save/resume: optimizer caches in
/// group order, the shuffling seed, how many epochs have completed, and the
/// per-epoch mean-loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    /// Number of completed epochs; also the next epoch index to run.
    pub next_epoch: usize,
    pub loss_history: Vec<f64>,
    pub optim: Vec<OptimState>,
}

/// A model together with its training state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: RankModel,
    pub state: TrainState,
}

/// Path of the text manifest written next to a checkpoint.
pub fn manifest_path(ckpt: &Path) -> PathBuf {
    let mut p = ckpt.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

/// Serializes model and state. Writing the same checkpoint twice produces
/// byte-identical files.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let spec_json = serde_json::to_vec(&ckpt.model.spec).expect("spec serializes");
    buf.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&spec_json);

    let params = ckpt.model.flat_parameters();
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params {
        buf.extend_from_slice(&v.to_le_bytes());
    }

    let state = &ckpt.state;
    buf.extend_from_slice(&state.seed.to_le_bytes());
    buf.extend_from_slice(&(state.next_epoch as u64).to_le_bytes());
    buf.extend_from_slice(&(state.loss_history.len() as u64).to_le_bytes());
    for v in &state.loss_history {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(state.optim.len() as u32).to_le_bytes());
    for group in &state.optim {
        buf.extend_from_slice(&group.step.to_le_bytes());
        buf.extend_from_slice(&(group.cache.len() as u32).to_le_bytes());
        for cache in &group.cache {
            buf.extend_from_slice(&(cache.len() as u64).to_le_bytes());
            for v in cache {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    fs::write(path, &buf)?;
    write_manifest(ckpt, &manifest_path(path))?;
    Ok(())
}

fn write_manifest(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("seed = {}\n", ckpt.state.seed));
    out.push_str(&format!("epoch = {}\n", ckpt.state.next_epoch));
    let history: Vec<String> = ckpt.state.loss_history.iter().map(|v| format!("{v}")).collect();
    out.push_str(&format!("loss_history = {}\n", history.join(",")));
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Reads a checkpoint, rejecting bad magic, unknown versions, and truncation.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    let magic = cur.take(8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}; not an attrank checkpoint")));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "incompatible format version {version}; this build reads version {FORMAT_VERSION}"
        )));
    }
    let spec_len = cur.u32()? as usize;
    let spec: FeatureExtractorSpec = serde_json::from_slice(cur.take(spec_len)?)
        .map_err(|e| Error::Checkpoint(format!("unreadable spec block: {e}")))?;

    // Structure comes from the spec; stored values overwrite the init draws.
    let model = RankModel::init(&spec, 0)?;
    let n_values = cur.u64()? as usize;
    if n_values != model.parameter_count() {
        return Err(Error::Checkpoint(format!(
            "file holds {n_values} parameters, spec implies {}",
            model.parameter_count()
        )));
    }
    let values = cur.f64_vec(n_values)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter value in file".into()));
    }
    model.set_flat_parameters(&values).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let seed = cur.u64()?;
    let next_epoch = cur.u64()? as usize;
    let history_len = cur.u64()? as usize;
    let loss_history = cur.f64_vec(history_len)?;
    let n_groups = cur.u32()? as usize;
    let mut optim = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let step = cur.u64()?;
        let n_caches = cur.u32()? as usize;
        let mut cache = Vec::with_capacity(n_caches);
        for _ in 0..n_caches {
            let len = cur.u64()? as usize;
            cache.push(cur.f64_vec(len)?);
        }
        optim.push(OptimState { cache, step });
    }
    if cur.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes after state block", buf.len() - cur.pos)));
    }

    Ok(Checkpoint { model, state: TrainState { seed, next_epoch, loss_history, optim } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::FeatureExtractorSpec;

    fn small_checkpoint() -> Checkpoint {
        let spec = FeatureExtractorSpec::dense_only((1, 4, 4), &[3]);
        let model = RankModel::init(&spec, 9).unwrap();
        let state = TrainState {
            seed: 9,
            next_epoch: 2,
            loss_history: vec![0.7, 0.52],
            optim: vec![
                OptimState { cache: vec![vec![0.25; 48], vec![0.5; 3]], step: 10 },
                OptimState { cache: vec![vec![0.0; 3]], step: 10 },
            ],
        };
        Checkpoint { model, state }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ckpt = small_checkpoint();
        save_checkpoint(&ckpt, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(fs::read(manifest_path(&p1)).unwrap(), fs::read(manifest_path(&p2)).unwrap());
    }

    #[test]
    fn round_trip_preserves_parameters_and_state_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = small_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let before = ckpt.model.flat_parameters();
        let after = loaded.model.flat_parameters();
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(loaded.state, ckpt.state);
        assert_eq!(loaded.model.spec, ckpt.model.spec);
    }

    #[test]
    fn corrupted_magic_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&small_checkpoint(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&small_checkpoint(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version 99"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&small_checkpoint(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }
}
