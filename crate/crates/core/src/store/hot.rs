use crate::compress::SceneToken;
use crate::frame::{Dims, SceneId};
use crate::segment::LocalWindow;

/// Fixed accounting charge for the hot index and window headers,
/// independent of how many tokens or frames they hold.
pub const HOT_METADATA_BYTES: usize = 64;

/// Tokens per interleaved scoring group.
pub const SCORE_LANES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TokenMeta {
    scene_id: SceneId,
    frame_range: (u64, u64),
    frame_count: usize,
}

/// Hot-tier token set, one token per finalized scene, in scene order.
///
/// Complete groups of [`SCORE_LANES`] tokens are stored component-major so
/// that one pass over the query scores the whole group with independent
/// accumulators. Tokens that do not yet fill a group stay row-major. No
/// padding is stored: the index holds exactly `len * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct HotIndex {
    dim: usize,
    meta: Vec<TokenMeta>,
    grouped: Vec<f32>,
    tail: Vec<f32>,
}

impl HotIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            meta: Vec::new(),
            grouped: Vec::new(),
            tail: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, token: SceneToken) {
        debug_assert_eq!(token.vector.len(), self.dim);
        debug_assert!(self.meta.last().is_none_or(|t| t.scene_id < token.scene_id));
        self.meta.push(TokenMeta {
            scene_id: token.scene_id,
            frame_range: token.frame_range,
            frame_count: token.frame_count,
        });
        self.tail.extend_from_slice(&token.vector);
        if self.tail.len() == SCORE_LANES * self.dim {
            self.grouped.reserve(self.tail.len());
            for i in 0..self.dim {
                for lane in 0..SCORE_LANES {
                    self.grouped.push(self.tail[lane * self.dim + i]);
                }
            }
            self.tail.clear();
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    /// Bytes held by token vectors.
    pub fn token_bytes(&self) -> usize {
        (self.grouped.len() + self.tail.len()) * std::mem::size_of::<f32>()
    }

    fn value(&self, pos: usize, component: usize) -> f32 {
        let full = self.grouped.len() / self.dim;
        if pos < full {
            let group = pos / SCORE_LANES;
            let lane = pos % SCORE_LANES;
            self.grouped[(group * self.dim + component) * SCORE_LANES + lane]
        } else {
            self.tail[(pos - full) * self.dim + component]
        }
    }

    /// Token at position `pos` (equal to its scene id).
    pub fn token(&self, pos: usize) -> Option<SceneToken> {
        let meta = self.meta.get(pos)?;
        Some(SceneToken {
            scene_id: meta.scene_id,
            vector: (0..self.dim).map(|i| self.value(pos, i)).collect(),
            frame_range: meta.frame_range,
            frame_count: meta.frame_count,
        })
    }

    /// Copies every token out of the index.
    pub fn tokens(&self) -> Vec<SceneToken> {
        (0..self.len()).filter_map(|p| self.token(p)).collect()
    }

    /// Dot product of `query` with each of the first `visible` tokens. Every
    /// score is accumulated in ascending component order, so the result is
    /// bit-identical to a plain per-token loop.
    pub fn score_prefix(&self, query: &[f64], visible: usize) -> Vec<(SceneId, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension");
        let visible = visible.min(self.len());
        let d = self.dim;
        let mut out = Vec::with_capacity(visible);
        let whole_groups = visible / SCORE_LANES;
        let kernel = group_kernel();
        for (g, group) in self
            .grouped
            .chunks_exact(d * SCORE_LANES)
            .take(whole_groups)
            .enumerate()
        {
            let acc = kernel(query, group);
            let base = g * SCORE_LANES;
            out.extend(
                acc.iter()
                    .enumerate()
                    .map(|(lane, &s)| (self.meta[base + lane].scene_id, s)),
            );
        }
        for pos in whole_groups * SCORE_LANES..visible {
            let mut acc = 0.0f64;
            for (i, &q) in query.iter().enumerate() {
                acc += q * self.value(pos, i) as f64;
            }
            out.push((self.meta[pos].scene_id, acc));
        }
        out
    }
}

type GroupKernel = fn(&[f64], &[f32]) -> [f64; SCORE_LANES];

/// Picks the widest group kernel the CPU supports. Every kernel performs,
/// per lane, the same IEEE multiply and add sequence as the scalar loop
/// (no fused multiply-add), so all of them produce identical bits.
fn group_kernel() -> GroupKernel {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            return |q, g| {
                // SAFETY: AVX support was detected at runtime just above.
                unsafe { simd::score_group_avx(q, g) }
            };
        }
        simd::score_group_sse2
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        score_group_scalar
    }
}

#[cfg_attr(target_arch = "x86_64", allow(dead_code))]
fn score_group_scalar(query: &[f64], group: &[f32]) -> [f64; SCORE_LANES] {
    let mut acc = [0.0f64; SCORE_LANES];
    for (&q, column) in query.iter().zip(group.chunks_exact(SCORE_LANES)) {
        for (a, &v) in acc.iter_mut().zip(column) {
            *a += q * v as f64;
        }
    }
    acc
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use super::SCORE_LANES;
    use std::arch::x86_64::*;

    const _: () = assert!(SCORE_LANES.is_multiple_of(4));

    pub(super) fn score_group_sse2(query: &[f64], group: &[f32]) -> [f64; SCORE_LANES] {
        assert_eq!(group.len(), query.len() * SCORE_LANES);
        let mut out = [0.0f64; SCORE_LANES];
        // SAFETY: SSE2 is part of the x86_64 baseline. Each load reads the
        // four values of one `chunks_exact(4)` chunk; stores write two f64
        // into a two-element chunk of `out`. All are unaligned variants.
        unsafe {
            let mut acc = [_mm_setzero_pd(); SCORE_LANES / 2];
            for (&q, row) in query.iter().zip(group.chunks_exact(SCORE_LANES)) {
                let qv = _mm_set1_pd(q);
                for (pair, quad) in acc.chunks_exact_mut(2).zip(row.chunks_exact(4)) {
                    let v = _mm_loadu_ps(quad.as_ptr());
                    let lo = _mm_cvtps_pd(v);
                    let hi = _mm_cvtps_pd(_mm_movehl_ps(v, v));
                    pair[0] = _mm_add_pd(pair[0], _mm_mul_pd(qv, lo));
                    pair[1] = _mm_add_pd(pair[1], _mm_mul_pd(qv, hi));
                }
            }
            for (dst, a) in out.chunks_exact_mut(2).zip(&acc) {
                _mm_storeu_pd(dst.as_mut_ptr(), *a);
            }
        }
        out
    }

    /// # Safety
    /// The CPU must support AVX.
    #[target_feature(enable = "avx")]
    pub(super) unsafe fn score_group_avx(query: &[f64], group: &[f32]) -> [f64; SCORE_LANES] {
        assert_eq!(group.len(), query.len() * SCORE_LANES);
        let mut out = [0.0f64; SCORE_LANES];
        // SAFETY: AVX is guaranteed by the caller; pointers come from
        // four-element chunks as in the SSE2 kernel.
        unsafe {
            let mut acc = [_mm256_setzero_pd(); SCORE_LANES / 4];
            for (&q, row) in query.iter().zip(group.chunks_exact(SCORE_LANES)) {
                let qv = _mm256_set1_pd(q);
                for (a, quad) in acc.iter_mut().zip(row.chunks_exact(4)) {
                    let v = _mm256_cvtps_pd(_mm_loadu_ps(quad.as_ptr()));
                    *a = _mm256_add_pd(*a, _mm256_mul_pd(qv, v));
                }
            }
            for (dst, a) in out.chunks_exact_mut(4).zip(&acc) {
                _mm256_storeu_pd(dst.as_mut_ptr(), *a);
            }
        }
        out
    }
}

/// Hot-tier footprint: token vectors, live window patches and the fixed
/// metadata charge.
pub fn measure_hot(index: &HotIndex, window: &LocalWindow, dims: &Dims) -> usize {
    HOT_METADATA_BYTES + index.token_bytes() + window.len() * dims.frame_bytes()
}
