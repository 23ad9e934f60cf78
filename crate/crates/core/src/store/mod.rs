//! Two-tier scene memory.
//!
//! The hot tier keeps one token per finalized scene. Full-resolution frames
//! of finalized scenes live only in the cold tier: an append-only log of
//! frame records (`VSC1` header, then `.vsf` records) indexed by a JSON
//! manifest that also persists the tokens. Each extent carries a CRC32.
//!
//! On disk a store directory holds `cold.vsc` and `manifest.json`. The
//! manifest is replaced atomically after each append, so a reload always
//! sees a prefix of the offloaded scenes.

mod cold;
mod hot;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

pub use cold::{ColdBackend, FileBackend, MemoryBackend, COLD_HEADER_LEN, COLD_MAGIC};
pub use hot::{measure_hot, HotIndex, HOT_METADATA_BYTES};
pub use manifest::{Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_VERSION};

use crate::compress::SceneToken;
use crate::error::{Error, Result};
use crate::frame::{Dims, FrameFeature, SceneId};
use crate::vsf::{decode_record, encode_record, record_len};

pub const COLD_FILE: &str = "cold.vsc";

/// Byte range of a scene inside the cold tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteExtent {
    pub offset: u64,
    pub length: u64,
}

/// A finalized scene with its full-resolution frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: SceneId,
    pub frames: Vec<FrameFeature>,
    pub token: SceneToken,
    pub byte_extent: ByteExtent,
}

/// Hot token index plus cold frame storage.
pub struct TieredStore {
    dims: Dims,
    backend: Box<dyn ColdBackend>,
    manifest: Manifest,
    hot: HotIndex,
    dir: Option<PathBuf>,
    fsync: bool,
}

impl std::fmt::Debug for TieredStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TieredStore")
            .field("dims", &self.dims)
            .field("scenes", &self.manifest.scenes.len())
            .field("cold_bytes", &self.backend.len())
            .field("dir", &self.dir)
            .finish()
    }
}

impl TieredStore {
    /// A store whose cold tier is a byte buffer in process memory.
    pub fn in_memory(dims: Dims) -> Result<Self> {
        Self::with_backend(dims, Box::new(MemoryBackend::new()))
    }

    /// A non-persistent store over an arbitrary backend. The backend must
    /// already contain the cold header and nothing else.
    pub fn with_backend(dims: Dims, backend: Box<dyn ColdBackend>) -> Result<Self> {
        dims.validate()?;
        if backend.len() != COLD_HEADER_LEN {
            return Err(Error::Store("backend is not a fresh cold tier".into()));
        }
        Ok(Self {
            dims,
            backend,
            manifest: Manifest::new(dims),
            hot: HotIndex::new(dims.dim),
            dir: None,
            fsync: false,
        })
    }

    /// Creates an empty on-disk store, replacing any existing one in `dir`.
    pub fn create(dir: impl AsRef<Path>, dims: Dims, fsync: bool) -> Result<Self> {
        dims.validate()?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let backend = FileBackend::create(&dir.join(COLD_FILE), fsync)?;
        let manifest = Manifest::new(dims);
        manifest.save(&dir.join(MANIFEST_FILE), fsync)?;
        Ok(Self {
            dims,
            backend: Box::new(backend),
            manifest,
            hot: HotIndex::new(dims.dim),
            dir: Some(dir.to_path_buf()),
            fsync,
        })
    }

    /// Reopens an on-disk store. Bytes past the last manifest extent (left
    /// by an interrupted append) are discarded.
    pub fn open(dir: impl AsRef<Path>, fsync: bool) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
        let mut backend = FileBackend::open(&dir.join(COLD_FILE), fsync)
            .map_err(|e| Error::Store(format!("{}: {e}", dir.join(COLD_FILE).display())))?;
        let end = manifest.cold_end().unwrap_or(COLD_HEADER_LEN);
        if backend.len() > end {
            backend.truncate(end)?;
        }
        let mut hot = HotIndex::new(manifest.dims.dim);
        for entry in &manifest.scenes {
            hot.push(entry.scene_token());
        }
        Ok(Self {
            dims: manifest.dims,
            backend: Box::new(backend),
            manifest,
            hot,
            dir: Some(dir.to_path_buf()),
            fsync,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn hot(&self) -> &HotIndex {
        &self.hot
    }

    pub fn len(&self) -> usize {
        self.manifest.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.scenes.is_empty()
    }

    pub fn cold_bytes(&self) -> u64 {
        self.backend.len()
    }

    pub fn next_scene_id(&self) -> SceneId {
        SceneId(self.manifest.scenes.len() as u64)
    }

    /// Moves a finished scene to the cold tier and its token to the hot index.
    ///
    /// `finalized_at` is the timestamp of the frame that closed the scene,
    /// or `None` for an end-of-stream flush. On error nothing becomes
    /// visible: the cold tier is rolled back and the manifest is untouched.
    pub fn offload(
        &mut self,
        token: SceneToken,
        frames: Vec<FrameFeature>,
        finalized_at: Option<f64>,
    ) -> Result<SceneId> {
        let id = token.scene_id;
        let expected = self.next_scene_id();
        if id < expected {
            return Err(Error::DuplicateScene(id));
        }
        if id > expected {
            return Err(Error::SceneOrder { expected, got: id });
        }
        self.check_scene(&token, &frames)?;

        let mut buf = Vec::with_capacity(frames.len() * record_len(&self.dims));
        for f in &frames {
            encode_record(f, &mut buf);
        }
        drop(frames);
        let crc32 = crc32fast::hash(&buf);

        let rollback_len = self.backend.len();
        let offset = match self.backend.append(&buf) {
            Ok(offset) => offset,
            Err(e) => {
                let _ = self.backend.truncate(rollback_len);
                return Err(Error::Io(e));
            }
        };

        self.manifest.scenes.push(ManifestEntry {
            id,
            first_frame: token.frame_range.0,
            last_frame: token.frame_range.1,
            offset,
            length: buf.len() as u64,
            crc32,
            token: token.vector.clone(),
            finalized_at,
        });
        if let Some(dir) = &self.dir {
            if let Err(e) = self.manifest.save(&dir.join(MANIFEST_FILE), self.fsync) {
                self.manifest.scenes.pop();
                let _ = self.backend.truncate(rollback_len);
                return Err(e);
            }
        }
        self.hot.push(token);
        Ok(id)
    }

    fn check_scene(&self, token: &SceneToken, frames: &[FrameFeature]) -> Result<()> {
        let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
            return Err(Error::Empty("offloaded scene has no frames"));
        };
        if token.vector.len() != self.dims.dim {
            return Err(Error::DimensionMismatch {
                what: "token",
                expected: self.dims.dim,
                found: token.vector.len(),
            });
        }
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != self.dims {
                return Err(Error::DimensionMismatch {
                    what: "frame values",
                    expected: self.dims.values_per_frame(),
                    found: f.dims().values_per_frame(),
                });
            }
            if f.frame_index() != first.frame_index() + i as u64 {
                return Err(Error::Store(format!(
                    "scene {} frames are not contiguous at index {}",
                    token.scene_id,
                    f.frame_index()
                )));
            }
        }
        if token.frame_range != (first.frame_index(), last.frame_index())
            || token.frame_count != frames.len()
        {
            return Err(Error::Store(format!(
                "token metadata of scene {} disagrees with its frames",
                token.scene_id
            )));
        }
        Ok(())
    }

    pub fn entry(&self, id: SceneId) -> Result<&ManifestEntry> {
        usize::try_from(id.0)
            .ok()
            .and_then(|i| self.manifest.scenes.get(i))
            .ok_or(Error::SceneNotFound(id))
    }

    /// Reads a scene's frames back from the cold tier, checking its extent.
    pub fn fetch(&self, id: SceneId) -> Result<SceneRecord> {
        let entry = self.entry(id)?;
        let rec_len = record_len(&self.dims);
        let frames = entry.frame_count();
        let integrity = |reason: String| Error::Integrity { scene: id, reason };
        if entry.length != (frames * rec_len) as u64 {
            return Err(integrity(format!(
                "extent length {} does not hold {frames} frames",
                entry.length
            )));
        }
        let bytes = self
            .backend
            .read_at(entry.offset, entry.length as usize)
            .map_err(|e| integrity(format!("extent unreadable: {e}")))?;
        let crc = crc32fast::hash(&bytes);
        if crc != entry.crc32 {
            return Err(integrity(format!(
                "checksum mismatch: stored {:08x}, computed {crc:08x}",
                entry.crc32
            )));
        }
        let frames = bytes
            .chunks_exact(rec_len)
            .enumerate()
            .map(|(i, rec)| decode_record(rec, entry.first_frame + i as u64, self.dims))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| integrity(e.to_string()))?;
        Ok(SceneRecord {
            scene_id: id,
            frames,
            token: entry.scene_token(),
            byte_extent: ByteExtent {
                offset: entry.offset,
                length: entry.length,
            },
        })
    }

    /// Re-checksums every extent, returning the failures.
    pub fn verify(&self) -> Vec<Error> {
        self.manifest
            .scenes
            .iter()
            .filter_map(|e| self.fetch(e.id).err())
            .collect()
    }

    pub fn sync(&mut self) -> Result<()> {
        self.backend.sync()?;
        Ok(())
    }
}
