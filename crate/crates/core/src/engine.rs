//! Streaming loop: ingest, segment, compress, offload; plus query serving.
//!
//! [`Engine`] is the single ingestion handle. [`EngineReader`] handles are
//! cheap clones that answer queries against a consistent snapshot while
//! ingestion continues.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::compress::{compress_scene, SceneToken};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::frame::{FrameFeature, QueryEmbedding};
use crate::metrics::{EngineMetrics, MemorySample};
use crate::recall::{recall_visible, RecallResult};
use crate::segment::{Advance, LocalWindow};
use crate::store::{measure_hot, TieredStore, HOT_METADATA_BYTES};

/// What the engine keeps hot while streaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum MemoryMode {
    /// Segment, compress and offload; only tokens and the live window stay hot.
    Scene,
    /// Keep every frame hot with no compression.
    Full,
    /// Keep every `stride`-th frame hot with no compression.
    Uniform { stride: usize },
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryMode::Scene => f.write_str("scene"),
            MemoryMode::Full => f.write_str("full"),
            MemoryMode::Uniform { stride } => write!(f, "uniform{stride}"),
        }
    }
}

struct State {
    store: TieredStore,
    window: LocalWindow,
    /// Frames held hot by the baseline modes.
    baseline: Vec<FrameFeature>,
    metrics: EngineMetrics,
    last_timestamp: Option<f64>,
}

struct Shared {
    config: EngineConfig,
    mode: MemoryMode,
    state: RwLock<State>,
    recall_latency_ms: Mutex<Vec<f64>>,
}

/// A query that could not be answered during [`Engine::run_stream`].
#[derive(Debug)]
pub struct QueryFailure {
    /// Position of the query in the schedule.
    pub index: usize,
    pub error: Error,
}

/// Everything produced by one [`Engine::run_stream`] call.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: EngineMetrics,
    pub results: Vec<RecallResult>,
    pub failures: Vec<QueryFailure>,
}

/// Single-owner ingestion handle.
pub struct Engine {
    shared: Arc<Shared>,
}

/// Shareable read-only query handle.
#[derive(Clone)]
pub struct EngineReader {
    shared: Arc<Shared>,
}

impl Engine {
    /// Starts a fresh stream over an empty store.
    pub fn new(config: EngineConfig, store: TieredStore, mode: MemoryMode) -> Result<Self> {
        if !store.is_empty() {
            return Err(Error::InvalidConfig(
                "a new stream needs an empty store; use Engine::resume".into(),
            ));
        }
        Self::build(config, store, mode)
    }

    /// Reattaches to a store written by an earlier run.
    ///
    /// The live window starts empty, so further ingestion continues with
    /// frame `last_frame + 1` and opens a new scene without overlap.
    pub fn resume(config: EngineConfig, store: TieredStore) -> Result<Self> {
        let engine = Self::build(config, store, MemoryMode::Scene)?;
        {
            let mut st = engine.shared.state.write();
            let next = st
                .store
                .manifest()
                .scenes
                .last()
                .map_or(0, |e| e.last_frame + 1);
            st.metrics.frames_ingested = next;
            st.metrics.scenes_finalized = st.store.len() as u64;
            st.metrics.cold_bytes = st.store.cold_bytes();
            if let Some(last) = st.store.manifest().scenes.last().map(|e| e.id) {
                let record = st.store.fetch(last)?;
                st.last_timestamp = record.frames.last().map(FrameFeature::timestamp);
            }
            st.window = LocalWindow::new(st.store.next_scene_id());
        }
        Ok(engine)
    }

    fn build(config: EngineConfig, store: TieredStore, mode: MemoryMode) -> Result<Self> {
        config.validate()?;
        if let MemoryMode::Uniform { stride: 0 } = mode {
            return Err(Error::InvalidConfig(
                "uniform stride must be positive".into(),
            ));
        }
        if store.dims() != config.dims {
            return Err(Error::DimensionMismatch {
                what: "store dimensions",
                expected: config.dims.values_per_frame(),
                found: store.dims().values_per_frame(),
            });
        }
        let metrics = EngineMetrics {
            cold_bytes: store.cold_bytes(),
            ..Default::default()
        };
        let state = State {
            window: LocalWindow::new(store.next_scene_id()),
            store,
            baseline: Vec::new(),
            metrics,
            last_timestamp: None,
        };
        Ok(Self {
            shared: Arc::new(Shared {
                config,
                mode,
                state: RwLock::new(state),
                recall_latency_ms: Mutex::new(Vec::new()),
            }),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    pub fn mode(&self) -> MemoryMode {
        self.shared.mode
    }

    pub fn reader(&self) -> EngineReader {
        EngineReader {
            shared: Arc::clone(&self.shared),
        }
    }

    /// Feeds one frame. Returns the token of a scene closed by this frame.
    pub fn ingest(&mut self, frame: FrameFeature) -> Result<Option<SceneToken>> {
        let started = Instant::now();
        let config = &self.shared.config;
        let mut guard = self.shared.state.write();
        let st = &mut *guard;

        if frame.dims() != config.dims {
            return Err(Error::DimensionMismatch {
                what: "frame values",
                expected: config.dims.values_per_frame(),
                found: frame.dims().values_per_frame(),
            });
        }
        if frame.frame_index() != st.metrics.frames_ingested {
            return Err(Error::OutOfOrder {
                previous: st.metrics.frames_ingested.wrapping_sub(1),
                got: frame.frame_index(),
            });
        }
        if let Some(prev) = st.last_timestamp {
            if frame.timestamp() < prev {
                return Err(Error::TimestampRegression {
                    frame_index: frame.frame_index(),
                    previous: prev,
                    got: frame.timestamp(),
                });
            }
        }

        let frame_index = frame.frame_index();
        let timestamp = frame.timestamp();
        let mut produced = None;
        match self.shared.mode {
            MemoryMode::Scene => {
                if let Advance::Split(done) = st.window.advance(frame, config)? {
                    let token = compress_scene(&done.frames, config, done.scene_id)?;
                    st.store
                        .offload(token.clone(), done.frames, Some(timestamp))?;
                    st.metrics.scenes_finalized += 1;
                    if done.decision.forced && !done.decision.is_boundary {
                        st.metrics.forced_splits += 1;
                    }
                    produced = Some(token);
                }
            }
            MemoryMode::Full => st.baseline.push(frame),
            MemoryMode::Uniform { stride } => {
                if frame_index.is_multiple_of(stride as u64) {
                    st.baseline.push(frame);
                }
            }
        }

        st.last_timestamp = Some(timestamp);
        st.metrics.frames_ingested += 1;
        st.metrics.cold_bytes = st.store.cold_bytes();
        let (hot, tokens) = hot_and_token_bytes(st, config, self.shared.mode);
        st.metrics.samples.push(MemorySample {
            frame_index,
            hot_bytes: hot,
            cold_bytes: st.metrics.cold_bytes,
            token_bytes: tokens,
        });
        st.metrics
            .ingest_latency_us
            .push(started.elapsed().as_secs_f64() * 1e6);
        Ok(produced)
    }

    /// Finalizes the live window, if any. Baseline modes have nothing to do.
    pub fn flush(&mut self) -> Result<Option<SceneToken>> {
        let config = &self.shared.config;
        let mut guard = self.shared.state.write();
        let st = &mut *guard;
        let Some((id, frames)) = st.window.drain() else {
            return Ok(None);
        };
        let token = compress_scene(&frames, config, id)?;
        st.store.offload(token.clone(), frames, None)?;
        st.metrics.scenes_finalized += 1;
        st.metrics.cold_bytes = st.store.cold_bytes();
        Ok(Some(token))
    }

    pub fn answer_query(&self, query: &QueryEmbedding) -> Result<RecallResult> {
        self.reader().answer_query(query)
    }

    pub fn metrics(&self) -> EngineMetrics {
        self.reader().metrics()
    }

    /// Interleaves ingestion with the query schedule: each query is answered
    /// once every frame with timestamp `<= query_time` has been ingested and
    /// before any later frame. The live window is not flushed.
    pub fn run_stream<I>(&mut self, frames: I, queries: &[QueryEmbedding]) -> Result<RunOutput>
    where
        I: IntoIterator<Item = Result<FrameFeature>>,
    {
        if queries
            .windows(2)
            .any(|w| w[1].query_time < w[0].query_time)
        {
            return Err(Error::InvalidConfig(
                "query schedule must be sorted by query_time".into(),
            ));
        }
        let mut results = Vec::new();
        let mut failures = Vec::new();
        let mut next = 0usize;
        let mut answer = |engine: &Engine, index: usize| match engine.answer_query(&queries[index])
        {
            Ok(r) => results.push(r),
            Err(error) => failures.push(QueryFailure { index, error }),
        };
        for frame in frames {
            let frame = frame?;
            while next < queries.len() && queries[next].query_time < frame.timestamp() {
                answer(self, next);
                next += 1;
            }
            self.ingest(frame)?;
        }
        while next < queries.len() {
            answer(self, next);
            next += 1;
        }
        Ok(RunOutput {
            metrics: self.metrics(),
            results,
            failures,
        })
    }

    /// Flushes and hands back the store.
    pub fn into_store(mut self) -> Result<TieredStore> {
        self.flush()?;
        let shared = Arc::try_unwrap(self.shared)
            .map_err(|_| Error::Store("engine readers are still alive".into()))?;
        let mut store = shared.state.into_inner().store;
        store.sync()?;
        Ok(store)
    }
}

fn hot_and_token_bytes(st: &State, config: &EngineConfig, mode: MemoryMode) -> (u64, u64) {
    match mode {
        MemoryMode::Scene => (
            measure_hot(st.store.hot(), &st.window, &config.dims) as u64,
            st.store.hot().token_bytes() as u64,
        ),
        MemoryMode::Full | MemoryMode::Uniform { .. } => (
            (HOT_METADATA_BYTES + st.baseline.len() * config.dims.frame_bytes()) as u64,
            0,
        ),
    }
}

impl EngineReader {
    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    /// Answers against the snapshot at `query.query_time`: scenes finalized
    /// later are invisible and so are frames stamped after it.
    pub fn answer_query(&self, query: &QueryEmbedding) -> Result<RecallResult> {
        let started = Instant::now();
        let config = &self.shared.config;
        let st = self.shared.state.read();
        query.validate(config.dims.dim)?;
        let t_q = query.query_time;

        let mut result = match self.shared.mode {
            MemoryMode::Scene => {
                let visible = st.store.manifest().visible_prefix(t_q);
                let window: Vec<FrameFeature> = if visible < st.store.len() {
                    // the scene that was still open at t_q now lives in cold storage
                    let id = st.store.manifest().scenes[visible].id;
                    st.store
                        .fetch(id)?
                        .frames
                        .into_iter()
                        .filter(|f| f.timestamp() <= t_q)
                        .collect()
                } else {
                    visible_frames(st.window.frames(), t_q)
                };
                recall_visible(query, &st.store, visible, &window, config.top_k)?
            }
            MemoryMode::Full | MemoryMode::Uniform { .. } => RecallResult {
                query_time: t_q,
                label: query.label.clone(),
                scored: Vec::new(),
                selected: Vec::new(),
                assembled: visible_frames(&st.baseline, t_q),
                latency_ms: 0.0,
            },
        };
        drop(st);
        result.latency_ms = started.elapsed().as_secs_f64() * 1e3;
        self.shared.recall_latency_ms.lock().push(result.latency_ms);
        Ok(result)
    }

    /// Snapshot of the metrics collected so far.
    pub fn metrics(&self) -> EngineMetrics {
        let mut m = self.shared.state.read().metrics.clone();
        m.recall_latency_ms = self.shared.recall_latency_ms.lock().clone();
        m
    }

    /// Runs `f` against the store under the read lock.
    pub fn with_store<T>(&self, f: impl FnOnce(&TieredStore) -> T) -> T {
        f(&self.shared.state.read().store)
    }

    /// Frame indices currently in the live window.
    pub fn window_indices(&self) -> Vec<u64> {
        self.shared
            .state
            .read()
            .window
            .frames()
            .iter()
            .map(FrameFeature::frame_index)
            .collect()
    }
}

fn visible_frames(frames: &[FrameFeature], t_q: f64) -> Vec<FrameFeature> {
    // timestamps are nondecreasing, so the visible frames form a prefix
    let n = frames.partition_point(|f| f.timestamp() <= t_q);
    frames[..n].to_vec()
}
