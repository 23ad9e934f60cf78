use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Memory gauges recorded after one ingested frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySample {
    pub frame_index: u64,
    pub hot_bytes: u64,
    pub cold_bytes: u64,
    /// Portion of `hot_bytes` held by scene tokens.
    pub token_bytes: u64,
}

/// Counters and series collected while streaming.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineMetrics {
    pub frames_ingested: u64,
    pub scenes_finalized: u64,
    /// Splits caused by the length cap alone.
    pub forced_splits: u64,
    pub samples: Vec<MemorySample>,
    pub cold_bytes: u64,
    pub recall_latency_ms: Vec<f64>,
    pub ingest_latency_us: Vec<f64>,
}

/// Aggregate view of [`EngineMetrics`] for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub frames_ingested: u64,
    pub scenes_finalized: u64,
    pub forced_splits: u64,
    pub hot_bytes: u64,
    pub peak_hot_bytes: u64,
    pub token_bytes: u64,
    pub cold_bytes: u64,
    pub queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_latency_ms_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest_latency_us_median: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

impl EngineMetrics {
    pub fn hot_bytes(&self) -> u64 {
        self.samples.last().map_or(0, |s| s.hot_bytes)
    }

    pub fn peak_hot_bytes(&self) -> u64 {
        self.samples.iter().map(|s| s.hot_bytes).max().unwrap_or(0)
    }

    /// Peak of hot bytes not attributable to scene tokens.
    pub fn peak_non_token_bytes(&self) -> u64 {
        self.samples
            .iter()
            .map(|s| s.hot_bytes - s.token_bytes)
            .max()
            .unwrap_or(0)
    }

    /// `frame_index,hot_bytes,cold_bytes`, one row per ingested frame.
    pub fn memory_csv(&self) -> String {
        let mut out = String::from("frame_index,hot_bytes,cold_bytes\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.frame_index, s.hot_bytes, s.cold_bytes);
        }
        out
    }

    /// `query,latency_ms`, one row per answered query.
    pub fn latency_csv(&self) -> String {
        let mut out = String::from("query,latency_ms\n");
        for (i, l) in self.recall_latency_ms.iter().enumerate() {
            let _ = writeln!(out, "{i},{l:.6}");
        }
        out
    }

    /// Summary; wall-clock fields are dropped unless `include_timing`.
    pub fn summary(&self, include_timing: bool) -> MetricsSummary {
        MetricsSummary {
            frames_ingested: self.frames_ingested,
            scenes_finalized: self.scenes_finalized,
            forced_splits: self.forced_splits,
            hot_bytes: self.hot_bytes(),
            peak_hot_bytes: self.peak_hot_bytes(),
            token_bytes: self.samples.last().map_or(0, |s| s.token_bytes),
            cold_bytes: self.cold_bytes,
            queries: self.recall_latency_ms.len(),
            recall_latency_ms_median: median(&self.recall_latency_ms).filter(|_| include_timing),
            ingest_latency_us_median: median(&self.ingest_latency_us).filter(|_| include_timing),
        }
    }
}
