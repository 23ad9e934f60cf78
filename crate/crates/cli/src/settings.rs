//! JSON config file merged under command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use scenemem::config::EngineConfig;

/// Every field mirrors a flag of the same name; flags win when both are set.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub tau: Option<f64>,
    pub max_scene_len: Option<usize>,
    pub top_k: Option<usize>,
    pub overlap: Option<usize>,
    pub window_a: Option<usize>,
    pub fsync: Option<bool>,
    pub no_timing: Option<bool>,
    pub frames: Option<Vec<usize>>,
    pub mode: Option<Vec<String>>,
    pub queries: Option<usize>,
    pub seed: Option<u64>,
}

impl FileSettings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let settings = serde_json::from_str(&text)
            .map_err(scenemem::Error::from)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(settings)
    }
}

/// Hyperparameter overrides gathered from flags.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub max_scene_len: Option<usize>,
    pub top_k: Option<usize>,
    pub overlap: Option<usize>,
    pub window_a: Option<usize>,
}

/// Applies file values, then flag values, on top of `base`.
pub fn merge(base: EngineConfig, file: &FileSettings, flags: &Overrides) -> EngineConfig {
    EngineConfig {
        tau: flags.tau.or(file.tau).unwrap_or(base.tau),
        max_scene_len: flags
            .max_scene_len
            .or(file.max_scene_len)
            .unwrap_or(base.max_scene_len),
        top_k: flags.top_k.or(file.top_k).unwrap_or(base.top_k),
        overlap: flags.overlap.or(file.overlap).unwrap_or(base.overlap),
        window_a: flags.window_a.or(file.window_a).unwrap_or(base.window_a),
        dims: base.dims,
    }
}
