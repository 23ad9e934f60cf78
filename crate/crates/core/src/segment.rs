//! Online scene-boundary detection over a live window of frames.
//!
//! A frame opens a new scene when it is dissimilar both to the scene's
//! fixed anchor (its first frame) and to the frame right before it. The
//! window is also split unconditionally once it holds `max_scene_len`
//! frames. After a split the new window starts with the last `overlap`
//! frames of the finished scene followed by the triggering frame, which
//! becomes the new anchor.

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::frame::{FrameFeature, SceneId};

/// Norms below this are treated as zero by [`cosine_similarity`].
pub const NORM_EPS: f64 = 1e-12;

/// Mean of all patch vectors of a frame, accumulated in patch order.
pub fn frame_embedding(frame: &FrameFeature) -> Vec<f64> {
    let d = frame.dims().dim;
    let mut acc = vec![0.0f64; d];
    let mut count = 0usize;
    for patch in frame.patches() {
        for (a, &v) in acc.iter_mut().zip(patch) {
            *a += v as f64;
        }
        count += 1;
    }
    let n = count as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either norm is degenerate.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let (nu, nv) = (nu.sqrt(), nv.sqrt());
    if nu < NORM_EPS || nv < NORM_EPS {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Outcome of testing one incoming frame against the live window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDecision {
    /// Both similarities fell below tau.
    pub is_boundary: bool,
    pub s_anchor: f64,
    pub s_adj: f64,
    /// The window was already at `max_scene_len`.
    pub forced: bool,
}

impl BoundaryDecision {
    /// Whether the caller must finalize the current scene.
    pub fn splits(&self) -> bool {
        self.is_boundary || self.forced
    }
}

/// The boundary rule on precomputed similarities.
pub fn is_boundary(s_anchor: f64, s_adj: f64, tau: f64) -> bool {
    s_anchor < tau && s_adj < tau
}

/// Frames of the current, unfinished scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWindow {
    scene_id: SceneId,
    frames: Vec<FrameFeature>,
    anchor_index: usize,
}

/// A scene closed by [`LocalWindow::advance`].
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedScene {
    pub scene_id: SceneId,
    pub frames: Vec<FrameFeature>,
    pub decision: BoundaryDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Continue,
    Split(FinishedScene),
}

impl Default for LocalWindow {
    fn default() -> Self {
        Self::new(SceneId(0))
    }
}

impl LocalWindow {
    pub fn new(scene_id: SceneId) -> Self {
        Self {
            scene_id,
            frames: Vec::new(),
            anchor_index: 0,
        }
    }

    pub fn scene_id(&self) -> SceneId {
        self.scene_id
    }

    pub fn frames(&self) -> &[FrameFeature] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn anchor(&self) -> Option<&FrameFeature> {
        self.frames.get(self.anchor_index)
    }

    pub fn last(&self) -> Option<&FrameFeature> {
        self.frames.last()
    }

    /// Feeds one frame, splitting the window when a boundary is detected.
    pub fn advance(&mut self, incoming: FrameFeature, config: &EngineConfig) -> Result<Advance> {
        let Some(last) = self.frames.last() else {
            self.frames.push(incoming);
            self.anchor_index = 0;
            return Ok(Advance::Continue);
        };
        if incoming.frame_index() <= last.frame_index() {
            return Err(Error::OutOfOrder {
                previous: last.frame_index(),
                got: incoming.frame_index(),
            });
        }
        let decision = decide_boundary(self, &incoming, config)?;
        if !decision.splits() {
            self.frames.push(incoming);
            return Ok(Advance::Continue);
        }

        let finished_frames = std::mem::take(&mut self.frames);
        let carried = config.overlap.min(finished_frames.len());
        let mut next = Vec::with_capacity(config.max_scene_len);
        next.extend_from_slice(&finished_frames[finished_frames.len() - carried..]);
        next.push(incoming);

        let finished = FinishedScene {
            scene_id: self.scene_id,
            frames: finished_frames,
            decision,
        };
        self.frames = next;
        self.anchor_index = carried;
        self.scene_id = self.scene_id.next();
        Ok(Advance::Split(finished))
    }

    /// Empties the window, returning its frames as a finished scene.
    pub fn drain(&mut self) -> Option<(SceneId, Vec<FrameFeature>)> {
        if self.frames.is_empty() {
            return None;
        }
        let id = self.scene_id;
        self.scene_id = id.next();
        self.anchor_index = 0;
        Some((id, std::mem::take(&mut self.frames)))
    }
}

/// Tests `incoming` against the window's anchor and its last frame.
pub fn decide_boundary(
    window: &LocalWindow,
    incoming: &FrameFeature,
    config: &EngineConfig,
) -> Result<BoundaryDecision> {
    let (Some(anchor), Some(last)) = (window.anchor(), window.last()) else {
        return Err(Error::Empty("boundary decision needs a non-empty window"));
    };
    let current = frame_embedding(incoming);
    let s_anchor = cosine_similarity(&current, &frame_embedding(anchor));
    let s_adj = cosine_similarity(&current, &frame_embedding(last));
    Ok(BoundaryDecision {
        is_boundary: is_boundary(s_anchor, s_adj, config.tau),
        s_anchor,
        s_adj,
        forced: window.len() >= config.max_scene_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Dims;
    use proptest::prelude::*;

    fn dims2() -> Dims {
        Dims::new(2, 1, 1).unwrap()
    }

    fn frame(i: u64, v: &[f32]) -> FrameFeature {
        let dims = Dims::new(v.len(), 1, 1).unwrap();
        FrameFeature::uniform(i, i as f64, dims, v).unwrap()
    }

    fn config(dims: Dims) -> EngineConfig {
        EngineConfig::new(dims)
    }

    #[test]
    fn embedding_of_identical_patches() {
        let dims = Dims::new(3, 2, 2).unwrap();
        let f = FrameFeature::uniform(0, 0.0, dims, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(frame_embedding(&f), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn embedding_is_arithmetic_mean() {
        let dims = Dims::new(2, 1, 2).unwrap();
        let f = FrameFeature::new(0, 0.0, dims, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(frame_embedding(&f), vec![0.5, 0.5]);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]);
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine_similarity(&[1e-14, 0.0], &[1.0, 0.0]), 0.0);
    }

    /// Window [anchor, last] and an incoming frame at the requested cosines.
    fn scenario(s_anchor: f64, s_adj: f64) -> (LocalWindow, FrameFeature, EngineConfig) {
        let at = |c: f64, sign: f64| {
            let s = (1.0 - c * c).sqrt() * sign;
            [c as f32, s as f32]
        };
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        w.frames.push(frame(0, &at(s_anchor, 1.0)));
        w.frames.push(frame(1, &at(s_adj, -1.0)));
        (w, frame(2, &[1.0, 0.0]), cfg)
    }

    #[test]
    fn boundary_requires_both_conditions() {
        for (sa, sj, expect) in [(0.7, 0.7, true), (0.9, 0.7, false), (0.7, 0.9, false)] {
            let (w, inc, cfg) = scenario(sa, sj);
            let d = decide_boundary(&w, &inc, &cfg).unwrap();
            assert!((d.s_anchor - sa).abs() < 1e-6);
            assert!((d.s_adj - sj).abs() < 1e-6);
            assert_eq!(d.is_boundary, expect, "s_anchor={sa} s_adj={sj}");
            assert!(!d.forced);
            assert_eq!(is_boundary(sa, sj, 0.8), expect);
        }
    }

    #[test]
    fn empty_window_is_caller_error() {
        let cfg = config(dims2());
        let w = LocalWindow::default();
        assert!(matches!(
            decide_boundary(&w, &frame(0, &[1.0, 0.0]), &cfg),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn first_frame_initializes_window() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        assert_eq!(
            w.advance(frame(0, &[1.0, 0.0]), &cfg).unwrap(),
            Advance::Continue
        );
        assert_eq!(w.len(), 1);
        assert_eq!(w.anchor_index(), 0);
        assert_eq!(w.anchor().unwrap().frame_index(), 0);
    }

    #[test]
    fn full_window_forces_split() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        for i in 0..8 {
            assert_eq!(
                w.advance(frame(i, &[1.0, 0.0]), &cfg).unwrap(),
                Advance::Continue
            );
        }
        match w.advance(frame(8, &[1.0, 0.0]), &cfg).unwrap() {
            Advance::Split(done) => {
                assert!(done.decision.forced);
                assert!(!done.decision.is_boundary);
                assert_eq!(done.frames.len(), 8);
                assert_eq!(done.scene_id, SceneId(0));
            }
            other => panic!("expected split, got {other:?}"),
        }
        let idx: Vec<_> = w.frames().iter().map(|f| f.frame_index()).collect();
        assert_eq!(idx, vec![7, 8]);
        assert_eq!(w.anchor().unwrap().frame_index(), 8);
        assert_eq!(w.scene_id(), SceneId(1));
    }

    #[test]
    fn out_of_order_frame_rejected() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        w.advance(frame(3, &[1.0, 0.0]), &cfg).unwrap();
        assert!(matches!(
            w.advance(frame(3, &[1.0, 0.0]), &cfg),
            Err(Error::OutOfOrder {
                previous: 3,
                got: 3
            })
        ));
    }

    #[test]
    fn boundary_on_second_frame_yields_single_frame_scene() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        w.advance(frame(0, &[1.0, 0.0]), &cfg).unwrap();
        match w.advance(frame(1, &[0.0, 1.0]), &cfg).unwrap() {
            Advance::Split(done) => assert_eq!(done.frames.len(), 1),
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn zero_embeddings_produce_boundaries() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        w.advance(frame(0, &[0.0, 0.0]), &cfg).unwrap();
        assert!(matches!(
            w.advance(frame(1, &[0.0, 0.0]), &cfg).unwrap(),
            Advance::Split(_)
        ));
    }

    #[test]
    fn drain_returns_live_frames() {
        let cfg = config(dims2());
        let mut w = LocalWindow::default();
        assert!(w.drain().is_none());
        for i in 0..3 {
            w.advance(frame(i, &[1.0, 0.0]), &cfg).unwrap();
        }
        let (id, frames) = w.drain().unwrap();
        assert_eq!(id, SceneId(0));
        assert_eq!(frames.len(), 3);
        assert!(w.is_empty());
        assert_eq!(w.scene_id(), SceneId(1));
    }

    fn arb_frame(dims: Dims) -> impl Strategy<Value = FrameFeature> {
        prop::collection::vec(-4.0f32..4.0, dims.values_per_frame())
            .prop_map(move |data| FrameFeature::new(0, 0.0, dims, data).unwrap())
    }

    fn scale(f: &FrameFeature, c: f32, index: u64) -> FrameFeature {
        let data = f.data().iter().map(|v| v * c).collect();
        FrameFeature::new(index, index as f64, f.dims(), data).unwrap()
    }

    proptest! {
        #[test]
        fn window_never_exceeds_cap_and_covers_stream(
            seq in prop::collection::vec(0usize..3, 1..80),
            m in 1usize..10,
            overlap_seed in 0usize..10,
        ) {
            let overlap = overlap_seed % m;
            let cfg = EngineConfig { max_scene_len: m, overlap, ..config(dims2()) };
            let basis = [[1.0f32, 0.0], [0.0, 1.0], [-1.0, 0.2]];
            let mut w = LocalWindow::default();
            let mut scenes: Vec<Vec<u64>> = Vec::new();
            for (i, &c) in seq.iter().enumerate() {
                let anchor_before = w.anchor().map(|a| a.frame_index());
                match w.advance(frame(i as u64, &basis[c]), &cfg).unwrap() {
                    Advance::Continue => {
                        if let Some(a) = anchor_before {
                            prop_assert_eq!(w.anchor().unwrap().frame_index(), a);
                        }
                    }
                    Advance::Split(done) => {
                        scenes.push(done.frames.iter().map(|f| f.frame_index()).collect());
                        prop_assert_eq!(w.anchor().unwrap().frame_index(), i as u64);
                    }
                }
                prop_assert!(w.len() <= m);
            }
            // consecutive scenes share exactly min(overlap, len) frames
            let live: Vec<u64> = w.frames().iter().map(|f| f.frame_index()).collect();
            let mut all = scenes.clone();
            all.push(live);
            for pair in all.windows(2) {
                let shared = pair[1].iter().filter(|i| pair[0].contains(i)).count();
                prop_assert_eq!(shared, overlap.min(pair[0].len()));
            }
            let mut covered: Vec<u64> = all.concat();
            covered.sort_unstable();
            covered.dedup();
            prop_assert_eq!(covered, (0..seq.len() as u64).collect::<Vec<_>>());
        }

        #[test]
        fn decisions_invariant_under_positive_scaling(
            a in arb_frame(Dims { dim: 3, patch_rows: 2, patch_cols: 2 }),
            b in arb_frame(Dims { dim: 3, patch_rows: 2, patch_cols: 2 }),
            c in arb_frame(Dims { dim: 3, patch_rows: 2, patch_cols: 2 }),
            k in -3i32..4,
        ) {
            let cfg = config(a.dims());
            let c2 = 2f32.powi(k);
            let w1 = LocalWindow {
                frames: vec![scale(&a, 1.0, 0), scale(&b, 1.0, 1)],
                ..Default::default()
            };
            let w2 = LocalWindow {
                frames: vec![scale(&a, c2, 0), scale(&b, c2, 1)],
                ..Default::default()
            };
            let d1 = decide_boundary(&w1, &scale(&c, 1.0, 2), &cfg).unwrap();
            let d2 = decide_boundary(&w2, &scale(&c, c2, 2), &cfg).unwrap();
            prop_assert_eq!(d1, d2);
            // determinism
            prop_assert_eq!(d1, decide_boundary(&w1, &scale(&c, 1.0, 2), &cfg).unwrap());
        }
    }
}
