use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compress::SceneToken;
use crate::error::{Error, Result};
use crate::frame::{Dims, SceneId};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Persisted index of offloaded scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(flatten)]
    pub dims: Dims,
    pub scenes: Vec<ManifestEntry>,
}

/// One scene's location in the cold file plus its token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: SceneId,
    pub first_frame: u64,
    pub last_frame: u64,
    pub offset: u64,
    pub length: u64,
    pub crc32: u32,
    pub token: Vec<f32>,
    /// Timestamp of the frame whose arrival closed the scene; absent when
    /// the scene was closed by a flush at end of stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized_at: Option<f64>,
}

impl ManifestEntry {
    pub fn frame_count(&self) -> usize {
        (self.last_frame - self.first_frame + 1) as usize
    }

    pub fn scene_token(&self) -> SceneToken {
        SceneToken {
            scene_id: self.id,
            vector: self.token.clone(),
            frame_range: (self.first_frame, self.last_frame),
            frame_count: self.frame_count(),
        }
    }

    /// Whether a query at `query_time` may see this scene as finalized.
    pub fn visible_at(&self, query_time: f64) -> bool {
        self.finalized_at.is_some_and(|t| t <= query_time)
    }
}

impl Manifest {
    pub fn new(dims: Dims) -> Self {
        Self {
            version: MANIFEST_VERSION,
            dims,
            scenes: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Store(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        manifest.dims.validate()?;
        for (i, entry) in manifest.scenes.iter().enumerate() {
            if entry.id != SceneId(i as u64) {
                return Err(Error::Store(format!(
                    "manifest entry {i} carries id {}",
                    entry.id
                )));
            }
            if entry.last_frame < entry.first_frame || entry.token.len() != manifest.dims.dim {
                return Err(Error::Integrity {
                    scene: entry.id,
                    reason: "malformed manifest entry".into(),
                });
            }
        }
        Ok(manifest)
    }

    /// Replaces the file at `path` atomically via a sibling temp file.
    pub fn save(&self, path: &Path, fsync: bool) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes()?)?;
            if fsync {
                f.sync_all()?;
            }
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Number of leading scenes finalized no later than `query_time`.
    pub fn visible_prefix(&self, query_time: f64) -> usize {
        // finalization times are nondecreasing and flushed scenes come last
        self.scenes.partition_point(|e| e.visible_at(query_time))
    }

    /// End of the last extent: where the next append belongs.
    pub fn cold_end(&self) -> Option<u64> {
        self.scenes.last().map(|e| e.offset + e.length)
    }
}
