use std::io;

use thiserror::Error;

use crate::frame::SceneId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the scene memory engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("dimension `{0}` must be non-zero")]
    ZeroDimension(&'static str),

    #[error("truncated input while reading {0}")]
    Truncated(&'static str),

    #[error("non-finite value in frame {frame_index} at component {position}")]
    NonFinite { frame_index: u64, position: usize },

    #[error("{what} mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("out-of-order frame: index {got} after {previous}")]
    OutOfOrder { previous: u64, got: u64 },

    #[error("timestamp went backwards at frame {frame_index}: {got} < {previous}")]
    TimestampRegression {
        frame_index: u64,
        previous: f64,
        got: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("scene {0} was already offloaded")]
    DuplicateScene(SceneId),

    #[error("scene {got} offloaded out of order, expected {expected}")]
    SceneOrder { expected: SceneId, got: SceneId },

    #[error("scene {0} not found")]
    SceneNotFound(SceneId),

    #[error("integrity error in scene {scene}: {reason}")]
    Integrity { scene: SceneId, reason: String },

    #[error("store error: {0}")]
    Store(String),

    #[error("synthetic generator: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error reports corrupted persisted data.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Integrity { .. })
    }

    /// Whether the error reports malformed or mismatched input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::ZeroDimension(_)
                | Error::Truncated(_)
                | Error::NonFinite { .. }
                | Error::DimensionMismatch { .. }
                | Error::OutOfOrder { .. }
                | Error::TimestampRegression { .. }
        )
    }
}
