use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Dims;

pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_MAX_SCENE_LEN: usize = 8;
pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_OVERLAP: usize = 1;
pub const DEFAULT_WINDOW_A: usize = 2;

/// Engine hyperparameters plus the stream shape they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Boundary threshold: a frame opens a new scene when both its anchor
    /// and adjacent similarities fall below this value.
    pub tau: f64,
    /// Hard cap on frames held in one scene (and in the live window).
    pub max_scene_len: usize,
    /// Maximum number of scenes recalled per query.
    pub top_k: usize,
    /// Trailing frames of a finished scene carried into the next one.
    pub overlap: usize,
    /// Side of the square spatial fusion window.
    pub window_a: usize,
    #[serde(flatten)]
    pub dims: Dims,
}

impl EngineConfig {
    /// Default hyperparameters for a stream of the given shape.
    pub fn new(dims: Dims) -> Self {
        Self {
            tau: DEFAULT_TAU,
            max_scene_len: DEFAULT_MAX_SCENE_LEN,
            top_k: DEFAULT_TOP_K,
            overlap: DEFAULT_OVERLAP,
            window_a: DEFAULT_WINDOW_A,
            dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if self.max_scene_len == 0 {
            return Err(Error::InvalidConfig(
                "max_scene_len must be positive".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be positive".into()));
        }
        if self.overlap >= self.max_scene_len {
            return Err(Error::InvalidConfig(format!(
                "overlap ({}) must be smaller than max_scene_len ({})",
                self.overlap, self.max_scene_len
            )));
        }
        if self.window_a == 0 {
            return Err(Error::InvalidConfig("window_a must be positive".into()));
        }
        Ok(())
    }

    /// Upper bound on frames in any assembled recall sequence.
    pub fn max_assembled_frames(&self) -> usize {
        self.top_k * self.max_scene_len + self.max_scene_len
    }
}
