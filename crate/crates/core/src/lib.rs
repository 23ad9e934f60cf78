//! Streaming scene memory: online segmentation of frame-embedding streams,
//! per-scene token compression, hot/cold tiered storage and top-k recall.

pub mod bench;
pub mod compress;
pub mod config;
pub mod engine;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod oracle;
pub mod query;
pub mod recall;
pub mod segment;
pub mod store;
pub mod synth;
pub mod vsf;

pub use compress::{compress_scene, SceneToken};
pub use config::EngineConfig;
pub use engine::{Engine, EngineReader, MemoryMode, RunOutput};
pub use error::{Error, Result};
pub use frame::{Dims, FrameFeature, QueryEmbedding, SceneId};
pub use metrics::EngineMetrics;
pub use recall::{RecallResult, RecallResultJson};
pub use store::TieredStore;
