//! Brute-force reference implementations used to check the production
//! paths. Nothing here calls into `segment`, `compress` or `recall`; the
//! loops are deliberately naive and index-based.

#![allow(clippy::needless_range_loop)]

use crate::frame::FrameFeature;

/// Mean patch vector of a frame, computed by explicit indexing.
pub fn oracle_mean_embedding(frame: &FrameFeature) -> Vec<f64> {
    let dims = frame.dims();
    let data = frame.data();
    let patches = dims.patch_rows * dims.patch_cols;
    let mut out = vec![0.0f64; dims.dim];
    for k in 0..dims.dim {
        let mut s = 0.0f64;
        for p in 0..patches {
            s += data[p * dims.dim + k] as f64;
        }
        out[k] = s / patches as f64;
    }
    out
}

pub fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = (0..u.len()).map(|i| u[i] * v[i]).sum();
    let nu = (0..u.len()).map(|i| u[i] * u[i]).sum::<f64>().sqrt();
    let nv = (0..v.len()).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
    if nu < 1e-12 || nv < 1e-12 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

/// Boundaries found by direct evaluation of the two-condition rule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OracleSegmentation {
    /// Index of every frame that opened a new scene, in stream order.
    pub splits: Vec<u64>,
    /// Subset of `splits` caused only by the length cap.
    pub forced: Vec<u64>,
}

/// Replays segmentation over a whole stream.
///
/// With `cap = None`, only the similarity rule applies. With
/// `Some((max_scene_len, overlap))`, a frame arriving while the current
/// scene already spans `max_scene_len` frames splits unconditionally, and
/// each new scene starts `overlap` frames before its opening frame.
pub fn oracle_segment(
    frames: &[FrameFeature],
    tau: f64,
    cap: Option<(usize, usize)>,
) -> OracleSegmentation {
    let emb: Vec<Vec<f64>> = frames.iter().map(oracle_mean_embedding).collect();
    let mut out = OracleSegmentation::default();
    if frames.is_empty() {
        return out;
    }
    let mut anchor = 0usize;
    let mut scene_start = 0usize;
    for i in 1..frames.len() {
        let s_anchor = oracle_cosine(&emb[i], &emb[anchor]);
        let s_adj = oracle_cosine(&emb[i], &emb[i - 1]);
        let rule = s_anchor < tau && s_adj < tau;
        let full = cap.is_some_and(|(m, _)| i - scene_start >= m);
        if rule || full {
            let idx = frames[i].frame_index();
            out.splits.push(idx);
            if full && !rule {
                out.forced.push(idx);
            }
            let prev_len = i - scene_start;
            let carried = cap.map_or(0, |(_, c)| c.min(prev_len));
            anchor = i;
            scene_start = i - carried;
        }
    }
    out
}

/// Scene token by naive loops: temporal mean, zero-padded `a × a` windows
/// weighted by patch L2 norm, then spatial mean.
pub fn oracle_compress(frames: &[FrameFeature], a: usize) -> Vec<f64> {
    let dims = frames[0].dims();
    let (h, w, d) = (dims.patch_rows, dims.patch_cols, dims.dim);
    let m = frames.len();

    // temporal[x][y][k]
    let mut temporal = vec![vec![vec![0.0f64; d]; w]; h];
    for x in 0..h {
        for y in 0..w {
            for k in 0..d {
                let mut s = 0.0;
                for f in frames {
                    s += f.data()[(x * w + y) * d + k] as f64;
                }
                temporal[x][y][k] = s / m as f64;
            }
        }
    }

    let mut fused = vec![vec![vec![0.0f64; d]; w]; h];
    for s in 0..h {
        for t in 0..w {
            let mut window: Vec<Vec<f64>> = Vec::new();
            for i in 0..a {
                for j in 0..a {
                    if s + i < h && t + j < w {
                        window.push(temporal[s + i][t + j].clone());
                    } else {
                        window.push(vec![0.0; d]);
                    }
                }
            }
            let weights: Vec<f64> = window
                .iter()
                .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            let total: f64 = weights.iter().sum();
            for k in 0..d {
                if total < 1e-12 {
                    fused[s][t][k] = window.iter().map(|p| p[k]).sum::<f64>() / window.len() as f64;
                } else {
                    let num: f64 = (0..window.len()).map(|n| weights[n] * window[n][k]).sum();
                    fused[s][t][k] = num / total;
                }
            }
        }
    }

    let mut token = vec![0.0f64; d];
    for k in 0..d {
        let mut s = 0.0;
        for row in &fused {
            for cell in row {
                s += cell[k];
            }
        }
        token[k] = s / (h * w) as f64;
    }
    token
}

/// Dot products of the query against each token vector.
pub fn oracle_scores(query: &[f32], tokens: &[Vec<f32>]) -> Vec<f64> {
    tokens
        .iter()
        .map(|t| {
            let mut s = 0.0f64;
            for i in 0..query.len() {
                s += query[i] as f64 * t[i] as f64;
            }
            s
        })
        .collect()
}

/// Positions of the `k` largest scores by full sort (ties toward lower
/// position), returned ascending.
pub fn oracle_topk_scores(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("finite scores")
            .then(i.cmp(&j))
    });
    let mut top: Vec<usize> = order.into_iter().take(k).collect();
    top.sort();
    top
}

/// Top-k scene positions for a query over token vectors.
pub fn oracle_topk(query: &[f32], tokens: &[Vec<f32>], k: usize) -> Vec<usize> {
    oracle_topk_scores(&oracle_scores(query, tokens), k)
}
