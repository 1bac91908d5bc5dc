//! Optional TOML config file and cost file.
//!
//! The config file is a flat key/value table using the long flag names with
//! `-` replaced by `_`. Flags given on the command line take precedence.
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use uplift::dataset::{CostStructure, GroupCost, GroupTable};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub control_label: Option<String>,
    pub group_column: Option<String>,
    pub outcome_column: Option<String>,
    /// Model kind for `train`, model file for `predict` and `evaluate`.
    pub model: Option<String>,
    pub objective: Option<String>,
    pub cost: Option<PathBuf>,
    pub bins: Option<usize>,
    pub select: Option<bool>,
    pub validation_fraction: Option<f64>,
    pub top_fraction: Option<f64>,
    pub include_control: Option<bool>,
    // base learner
    pub learner: Option<String>,
    pub trees: Option<usize>,
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub bootstrap: Option<bool>,
    pub folds: Option<usize>,
    pub propensity: Option<String>,
    // generator
    pub groups: Option<String>,
    pub n: Option<usize>,
    pub base_rate: Option<f64>,
    pub informative: Option<usize>,
    pub uplift: Option<usize>,
    pub mix: Option<usize>,
    pub irrelevant: Option<usize>,
    pub uplift_per_group: Option<usize>,
    pub baseline_scale: Option<f64>,
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(&read(path)?).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.input, &mut cfg.output, &mut cfg.cost] {
            if let Some(v) = p.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Model file path for `predict`/`evaluate`, resolved like other paths.
    pub fn model_path(&self, config_path: Option<&Path>) -> Option<PathBuf> {
        let m = PathBuf::from(self.model.as_ref()?);
        let base = config_path.and_then(Path::parent).unwrap_or_else(|| Path::new(""));
        Some(if m.is_relative() { base.join(m) } else { m })
    }
}

/// `conversion_value = ...` plus one `[[group]]` table per group.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    pub conversion_value: f64,
    #[serde(default, rename = "group")]
    pub groups: Vec<GroupCost>,
}

impl CostFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        toml::from_str(&read(path)?).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolve(&self, groups: &GroupTable) -> CliResult<CostStructure> {
        Ok(CostStructure::from_records(self.conversion_value, &self.groups, groups)?)
    }
}
