//! Memory and latency sweep shared by every mode, so curves are comparable.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::engine::{Engine, MemoryMode};
use crate::error::{Error, Result};
use crate::frame::{Dims, QueryEmbedding};
use crate::metrics::median;
use crate::store::TieredStore;
use crate::synth::{gaussian, generate, scene_sizes_for, PlantedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub frame_counts: Vec<usize>,
    pub modes: Vec<MemoryMode>,
    pub config: EngineConfig,
    /// Planted scene sizes are drawn from this inclusive range.
    pub scene_size_min: usize,
    pub scene_size_max: usize,
    /// Timed queries issued after ingesting each prefix.
    pub queries: usize,
    pub seed: u64,
}

impl BenchSpec {
    /// 2×2 patches of dimension 16 with scenes of 6 or 7 frames.
    pub fn standard(frame_counts: Vec<usize>, modes: Vec<MemoryMode>) -> Self {
        let dims = Dims::new(16, 2, 2).expect("static dims");
        Self {
            frame_counts,
            modes,
            config: EngineConfig::new(dims),
            scene_size_min: 6,
            scene_size_max: 7,
            queries: 101,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.frame_counts.is_empty() || self.frame_counts.contains(&0) {
            return Err(Error::InvalidConfig("frame counts must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("at least one mode is required".into()));
        }
        if self.scene_size_min == 0 || self.scene_size_min > self.scene_size_max {
            return Err(Error::InvalidConfig("invalid scene size range".into()));
        }
        if self.queries == 0 {
            return Err(Error::InvalidConfig(
                "at least one query is required".into(),
            ));
        }
        Ok(())
    }
}

/// One (mode, frame count) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: String,
    pub frames: usize,
    pub scenes: usize,
    /// Hot bytes after the last frame.
    pub hot_bytes: u64,
    pub peak_hot_bytes: u64,
    pub token_bytes: u64,
    /// Peak hot bytes excluding token storage.
    pub peak_non_token_bytes: u64,
    pub cold_bytes: u64,
    /// Median wall-clock recall latency.
    pub recall_latency_ms: f64,
    /// Largest assembled sequence over the timed queries.
    pub assembled_frames: usize,
}

pub const BENCH_CSV_HEADER: &str = "mode,frames,scenes,hot_bytes,peak_hot_bytes,token_bytes,\
peak_non_token_bytes,cold_bytes,recall_latency_ms,assembled_frames";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{:.6},{}",
            self.mode,
            self.frames,
            self.scenes,
            self.hot_bytes,
            self.peak_hot_bytes,
            self.token_bytes,
            self.peak_non_token_bytes,
            self.cold_bytes,
            self.recall_latency_ms,
            self.assembled_frames
        );
        s
    }
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Runs every mode over every frame-count prefix of one planted stream,
/// with an in-memory cold tier. Rows are ordered mode-major.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let dims = spec.config.dims;
    let longest = *spec.frame_counts.iter().max().expect("validated non-empty");
    let sizes = scene_sizes_for(longest, spec.scene_size_min, spec.scene_size_max, spec.seed);
    let stream = generate(&PlantedSpec::new(sizes, dims, spec.seed))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let vectors: Vec<Vec<f32>> = (0..spec.queries)
        .map(|_| (0..dims.dim).map(|_| gaussian(&mut rng) as f32).collect())
        .collect();

    let mut rows = Vec::new();
    for &mode in &spec.modes {
        for &n in &spec.frame_counts {
            let store = TieredStore::in_memory(dims)?;
            let mut engine = Engine::new(spec.config, store, mode)?;
            for f in &stream.frames[..n] {
                engine.ingest(f.clone())?;
            }
            let t_q = stream.frames[n - 1].timestamp();
            // one untimed pass warms caches and the allocator
            let warm = QueryEmbedding::new(t_q, vectors[0].clone());
            engine.answer_query(&warm)?;

            let mut latencies = Vec::with_capacity(vectors.len());
            let mut assembled = 0;
            for v in &vectors {
                let r = engine.answer_query(&QueryEmbedding::new(t_q, v.clone()))?;
                latencies.push(r.latency_ms);
                assembled = assembled.max(r.assembled.len());
            }
            let m = engine.metrics();
            rows.push(BenchRow {
                mode: mode.to_string(),
                frames: n,
                scenes: m.scenes_finalized as usize,
                hot_bytes: m.hot_bytes(),
                peak_hot_bytes: m.peak_hot_bytes(),
                token_bytes: m.samples.last().map_or(0, |s| s.token_bytes),
                peak_non_token_bytes: m.peak_non_token_bytes(),
                cold_bytes: m.cold_bytes,
                recall_latency_ms: median(&latencies).unwrap_or(0.0),
                assembled_frames: assembled,
            });
        }
    }
    Ok(rows)
}
