pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod rank;
pub mod saliency;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use attrank::data::{load_dataset, PairDataset};

use crate::CliError;

/// Loads a `--config` file when given, otherwise an empty overlay.
pub fn file_overlay(
    config: &Option<PathBuf>,
    command: &'static str,
    known: &[&str],
) -> Result<BTreeMap<String, String>, CliError> {
    match config {
        Some(path) => crate::config::load_config_file(path, command, known),
        None => Ok(BTreeMap::new()),
    }
}

pub fn dataset(path: &Path) -> Result<PairDataset, CliError> {
    Ok(load_dataset(path, &Default::default())?)
}
