//! Versioned JSON container for trained models.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uplift::dataset::ExperimentDataset;
use uplift::metalearn::{ModelSpec, PairwiseModel, UpliftModel};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum StoredModel {
    /// One CATE column per arm against the control group.
    WithControl(UpliftModel),
    /// Pairwise comparisons combined by majority vote.
    NoControl(PairwiseModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub spec: ModelSpec,
    pub n_rows: usize,
    /// SHA-256 over features, outcomes, assignments and labels.
    pub data_fingerprint: String,
    /// Validation scores per kind when trained with model selection.
    #[serde(default)]
    pub selection: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_columns: Vec<String>,
    pub model: StoredModel,
    pub metadata: TrainingMetadata,
}

impl ModelFile {
    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn from_json(text: &str, path: &Path) -> CliResult<Self> {
        let err = |source| CliError::ModelFile {
            path: path.to_path_buf(),
            source,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CliError::Usage(format!("{}: missing format_version", path.display())))?;
        if version > u64::from(FORMAT_VERSION) {
            return Err(CliError::Usage(format!(
                "{}: model file format version {version} is newer than the supported version {FORMAT_VERSION}",
                path.display()
            )));
        }
        serde_json::from_value(value).map_err(err)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }
}

pub fn fingerprint(ds: &ExperimentDataset) -> String {
    let mut h = Sha256::new();
    for name in ds.feature_names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for label in ds.groups().labels() {
        h.update(label.as_bytes());
        h.update([0]);
    }
    for v in ds.features().as_slice() {
        h.update(v.to_le_bytes());
    }
    for v in ds.outcome() {
        h.update(v.to_le_bytes());
    }
    for &g in ds.assignment() {
        h.update((g as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.flush().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
