//! Run manifests: what ran, with which effective config, what it wrote and
//! the headline numbers it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Subcommand, e.g. `gen hard` or `boab`.
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub config: BTreeMap<String, String>,
    /// Unix seconds.
    pub started: f64,
    pub finished: f64,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
    /// Deterministic headline numbers; replays must match them exactly.
    pub metrics: BTreeMap<String, f64>,
    /// Wall-clock measurements, reported but never compared.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::data(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::data(format!("write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::data(format!("rename to {}: {e}", path.display())))?;
    Ok(())
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::data(e.to_string()))?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

/// Names of metrics that differ bitwise between two runs (or exist in only
/// one of them).
pub fn metric_differences(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Vec<String> {
    let mut diff: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k).is_none_or(|w| w.to_bits() != v.to_bits()))
        .map(|(k, _)| k.clone())
        .collect();
    diff.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    diff
}
