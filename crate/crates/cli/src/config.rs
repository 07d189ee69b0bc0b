//! Resolved-config echoes: every command writes the full key = value map it
//! ran under, and can be re-run from that file via `--config`. Unknown keys
//! are rejected so typos fail loudly instead of silently using defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::CliError;

/// A command's fully resolved configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    values: BTreeMap<String, String>,
}

impl Resolved {
    pub fn new(command: &'static str) -> Self {
        let mut values = BTreeMap::new();
        values.insert("command".to_string(), command.to_string());
        Resolved { values }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Writes the echo as sorted `key = value` lines.
    pub fn write_echo(&self, out_dir: &Path) -> Result<(), CliError> {
        let mut body = String::new();
        for (k, v) in &self.values {
            body.push_str(&format!("{k} = {v}\n"));
        }
        fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        fs::write(out_dir.join("config.txt"), body)
            .map_err(|e| CliError::Data(format!("cannot write config echo: {e}")))?;
        Ok(())
    }
}

/// Parses a `key = value` config file, rejecting keys the command does not
/// know. The `command` key, when present, must match.
pub fn load_config_file(path: &Path, command: &str, known: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {} is not `key = value`: {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key == "command" {
            if value != command {
                return Err(CliError::Usage(format!(
                    "config file is for command {value:?}, not {command:?}"
                )));
            }
            continue;
        }
        if !known.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("unknown config key {key:?} for command {command:?}")));
        }
        out.insert(key, value);
    }
    Ok(out)
}

/// Resolves one setting: explicit flag beats config file beats default.
pub fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map_err(|_| CliError::Usage(format!("config key {key:?} has unparsable value {raw:?}"))),
        None => Ok(default),
    }
}

/// Booleans: a present flag forces true; otherwise the config file decides.
pub fn resolve_flag(flag: bool, file: &BTreeMap<String, String>, key: &str) -> Result<bool, CliError> {
    if flag {
        return Ok(true);
    }
    match file.get(key).map(String::as_str) {
        None => Ok(false),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(CliError::Usage(format!("config key {key:?} must be true/false, got {other:?}"))),
    }
}
