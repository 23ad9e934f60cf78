//! Core value types: stream dimensions, frame features, scene ids and queries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of every frame in one stream: a `patch_rows × patch_cols` grid of
/// `dim`-component embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "P_h")]
    pub patch_rows: usize,
    #[serde(rename = "P_w")]
    pub patch_cols: usize,
}

impl Dims {
    pub fn new(dim: usize, patch_rows: usize, patch_cols: usize) -> Result<Self> {
        let dims = Self {
            dim,
            patch_rows,
            patch_cols,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::ZeroDimension("d"));
        }
        if self.patch_rows == 0 {
            return Err(Error::ZeroDimension("P_h"));
        }
        if self.patch_cols == 0 {
            return Err(Error::ZeroDimension("P_w"));
        }
        Ok(())
    }

    /// Number of patches per frame.
    pub fn patches(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    /// Number of f32 components per frame.
    pub fn values_per_frame(&self) -> usize {
        self.patches() * self.dim
    }

    /// Bytes occupied by one frame's patch values.
    pub fn frame_bytes(&self) -> usize {
        self.values_per_frame() * std::mem::size_of::<f32>()
    }

    /// Bytes occupied by one scene token vector.
    pub fn token_bytes(&self) -> usize {
        self.dim * std::mem::size_of::<f32>()
    }
}

/// Dense scene identifier, assigned in order of finalization.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SceneId(pub u64);

impl SceneId {
    pub fn next(self) -> Self {
        SceneId(self.0 + 1)
    }
}

impl fmt::Display for SceneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One frame's patch-embedding grid.
///
/// Patch values are stored patch-major: patch `(x, y)` occupies
/// `data[(x * patch_cols + y) * dim ..][..dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature {
    frame_index: u64,
    timestamp: f64,
    dims: Dims,
    data: Vec<f32>,
}

impl FrameFeature {
    pub fn new(frame_index: u64, timestamp: f64, dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.values_per_frame() {
            return Err(Error::DimensionMismatch {
                what: "frame values",
                expected: dims.values_per_frame(),
                found: data.len(),
            });
        }
        if !timestamp.is_finite() {
            return Err(Error::NonFinite {
                frame_index,
                position: 0,
            });
        }
        if let Some(position) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                frame_index,
                position,
            });
        }
        Ok(Self {
            frame_index,
            timestamp,
            dims,
            data,
        })
    }

    /// A frame whose every patch is the same vector.
    pub fn uniform(frame_index: u64, timestamp: f64, dims: Dims, patch: &[f32]) -> Result<Self> {
        if patch.len() != dims.dim {
            return Err(Error::DimensionMismatch {
                what: "patch length",
                expected: dims.dim,
                found: patch.len(),
            });
        }
        let data = patch
            .iter()
            .copied()
            .cycle()
            .take(dims.values_per_frame())
            .collect();
        Self::new(frame_index, timestamp, dims, data)
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// All patch values in patch-major order.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn patch(&self, row: usize, col: usize) -> &[f32] {
        let d = self.dims.dim;
        let start = (row * self.dims.patch_cols + col) * d;
        &self.data[start..start + d]
    }

    /// Iterates patch vectors in row-major patch order.
    pub fn patches(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims.dim)
    }

    /// Same content under a different stream position.
    pub fn with_index(mut self, frame_index: u64) -> Self {
        self.frame_index = frame_index;
        self
    }
}

/// An externally produced query embedding with its arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    pub query_time: f64,
    #[serde(rename = "embedding")]
    pub vector: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl QueryEmbedding {
    pub fn new(query_time: f64, vector: Vec<f32>) -> Self {
        Self {
            query_time,
            vector,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Checks the vector against the stream dimension and finiteness.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "query embedding",
                expected: dim,
                found: self.vector.len(),
            });
        }
        if self.query_time.is_nan() {
            return Err(Error::InvalidConfig("query_time is NaN".into()));
        }
        if let Some(position) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                frame_index: 0,
                position,
            });
        }
        Ok(())
    }
}
