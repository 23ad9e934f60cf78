//! Query-time recall: dot-product scoring of scene tokens, top-k selection,
//! and assembly of the bounded frame sequence handed downstream.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compress::SceneToken;
use crate::error::{Error, Result};
use crate::frame::{FrameFeature, QueryEmbedding, SceneId};
use crate::store::TieredStore;

/// Outcome of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallResult {
    pub query_time: f64,
    pub label: Option<String>,
    /// Score of every visible scene, in scene order.
    pub scored: Vec<(SceneId, f64)>,
    /// Recalled scenes in ascending scene order.
    pub selected: Vec<SceneId>,
    /// Recalled frames followed by live-window frames, deduplicated.
    pub assembled: Vec<FrameFeature>,
    pub latency_ms: f64,
}

/// Wire form of a [`RecallResult`]; frame payloads are referenced by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResultJson {
    pub query_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub scores: Vec<(u64, f64)>,
    pub selected: Vec<u64>,
    pub assembled_frame_indices: Vec<u64>,
    /// `null` when timings are excluded for reproducible output.
    pub latency_ms: Option<f64>,
}

impl RecallResult {
    pub fn assembled_indices(&self) -> Vec<u64> {
        self.assembled
            .iter()
            .map(FrameFeature::frame_index)
            .collect()
    }

    pub fn to_json(&self, include_timing: bool) -> RecallResultJson {
        RecallResultJson {
            query_time: self.query_time,
            label: self.label.clone(),
            scores: self.scored.iter().map(|(id, s)| (id.0, *s)).collect(),
            selected: self.selected.iter().map(|id| id.0).collect(),
            assembled_frame_indices: self.assembled_indices(),
            latency_ms: include_timing.then_some(self.latency_ms),
        }
    }
}

/// `score_i = q · T_i`, accumulated in component order.
pub fn score(query: &QueryEmbedding, tokens: &[SceneToken]) -> Result<Vec<(SceneId, f64)>> {
    let q = &query.vector;
    tokens
        .iter()
        .map(|t| {
            if t.vector.len() != q.len() {
                return Err(Error::DimensionMismatch {
                    what: "query embedding",
                    expected: t.vector.len(),
                    found: q.len(),
                });
            }
            let mut acc = 0.0f64;
            for (&a, &b) in q.iter().zip(&t.vector) {
                acc += a as f64 * b as f64;
            }
            Ok((t.scene_id, acc))
        })
        .collect()
}

/// Higher score first; equal scores resolved toward the earlier scene.
fn rank(a: &(SceneId, f64), b: &(SceneId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Ids of the `k` best scores, returned in ascending scene order.
///
/// One pass keeps the current best `k` in rank order; most candidates are
/// rejected by a single comparison against the current k-th entry.
pub fn top_k(scores: &[(SceneId, f64)], k: usize) -> Vec<SceneId> {
    if k == 0 {
        return Vec::new();
    }
    let mut best: Vec<(SceneId, f64)> = Vec::with_capacity(k + 1);
    for item in scores {
        if best.len() == k && rank(item, &best[k - 1]) != Ordering::Less {
            continue;
        }
        let at = best.partition_point(|b| rank(b, item) == Ordering::Less);
        best.insert(at, *item);
        best.truncate(k);
    }
    let mut ids: Vec<SceneId> = best.into_iter().map(|(id, _)| id).collect();
    ids.sort_unstable();
    ids
}

/// Concatenates recalled scene frames (ascending scene order) and the live
/// window, keeping the first occurrence of each frame index.
pub fn assemble(
    selected: &[SceneId],
    store: &TieredStore,
    window: &[FrameFeature],
) -> Result<Vec<FrameFeature>> {
    let mut ordered = selected.to_vec();
    ordered.sort_unstable();
    let mut out: Vec<FrameFeature> = Vec::new();
    let push = |out: &mut Vec<FrameFeature>, f: FrameFeature| {
        if out.last().is_none_or(|l| f.frame_index() > l.frame_index()) {
            out.push(f);
        }
    };
    for id in ordered {
        for f in store.fetch(id)?.frames {
            push(&mut out, f);
        }
    }
    for f in window {
        push(&mut out, f.clone());
    }
    Ok(out)
}

/// Score, select and assemble against an explicit token list.
pub fn recall(
    query: &QueryEmbedding,
    tokens: &[SceneToken],
    store: &TieredStore,
    window: &[FrameFeature],
    k: usize,
) -> Result<RecallResult> {
    let started = Instant::now();
    query.validate(store.dims().dim)?;
    let scored = score(query, tokens)?;
    finish(query, scored, store, window, k, started)
}

/// Score, select and assemble against the first `visible` tokens of the
/// store's hot index. Scores are bit-identical to [`score`].
pub fn recall_visible(
    query: &QueryEmbedding,
    store: &TieredStore,
    visible: usize,
    window: &[FrameFeature],
    k: usize,
) -> Result<RecallResult> {
    let started = Instant::now();
    query.validate(store.dims().dim)?;
    let q: Vec<f64> = query.vector.iter().map(|&v| v as f64).collect();
    let scored = store.hot().score_prefix(&q, visible);
    finish(query, scored, store, window, k, started)
}

fn finish(
    query: &QueryEmbedding,
    scored: Vec<(SceneId, f64)>,
    store: &TieredStore,
    window: &[FrameFeature],
    k: usize,
    started: Instant,
) -> Result<RecallResult> {
    let selected = top_k(&scored, k);
    let assembled = assemble(&selected, store, window)?;
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(RecallResult {
        query_time: query.query_time,
        label: query.label.clone(),
        scored,
        selected,
        assembled,
        latency_ms,
    })
}
