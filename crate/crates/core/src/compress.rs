//! Temporal-spatial compression of a finished scene into one token.
//!
//! 1. Temporal: average each patch position over the scene's frames.
//! 2. Spatial: for every grid position, fuse the `a × a` window anchored
//!    there (zero-padded past the grid edge) as an L2-norm weighted mean of
//!    its patches.
//! 3. Aggregate: average the fused grid into a single `d`-vector.
//!
//! All reductions run in ascending index order in `f64`; the final token is
//! stored as `f32`.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::frame::{Dims, FrameFeature, SceneId};

/// Weight sums below this fall back to the unweighted window mean.
pub const WEIGHT_EPS: f64 = 1e-12;

/// A `rows × cols` grid of `dim`-vectors in row-major patch order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f64>,
}

/// Output of temporal pooling: same shape as the input frames.
pub type TemporalMap = PatchGrid;

impl PatchGrid {
    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Self {
        Self {
            rows,
            cols,
            dim,
            data: vec![0.0; rows * cols * dim],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * dim {
            return Err(Error::DimensionMismatch {
                what: "grid values",
                expected: rows * cols * dim,
                found: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    fn get_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.cols + col) * self.dim;
        &mut self.data[start..start + self.dim]
    }
}

/// Per-position temporal mean over the frames of one scene.
pub fn temporal_compress(frames: &[FrameFeature]) -> Result<TemporalMap> {
    let first = frames.first().ok_or(Error::Empty(
        "temporal compression needs at least one frame",
    ))?;
    let dims = first.dims();
    let mut acc = vec![0.0f64; dims.values_per_frame()];
    for frame in frames {
        if frame.dims() != dims {
            return Err(Error::DimensionMismatch {
                what: "scene frame values",
                expected: dims.values_per_frame(),
                found: frame.dims().values_per_frame(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(frame.data()) {
            *a += v as f64;
        }
    }
    let m = frames.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    PatchGrid::from_vec(dims.patch_rows, dims.patch_cols, dims.dim, acc)
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm-weighted fusion of the `a × a` window anchored at every position.
///
/// Positions past the grid edge are zero patches with zero weight. A
/// window whose weights sum below [`WEIGHT_EPS`] yields the plain mean of
/// all `a * a` window slots instead.
pub fn spatial_fuse(map: &TemporalMap, a: usize) -> Result<PatchGrid> {
    if a == 0 {
        return Err(Error::InvalidConfig(
            "spatial window must be at least 1".into(),
        ));
    }
    let (rows, cols, dim) = (map.rows, map.cols, map.dim);
    let norms: Vec<f64> = map.data.chunks_exact(dim).map(l2_norm).collect();
    let mut fused = PatchGrid::zeros(rows, cols, dim);
    let mut weighted = vec![0.0f64; dim];
    let mut plain = vec![0.0f64; dim];
    for s in 0..rows {
        for t in 0..cols {
            weighted.fill(0.0);
            plain.fill(0.0);
            let mut weight_sum = 0.0;
            for r in s..(s + a).min(rows) {
                for c in t..(t + a).min(cols) {
                    let w = norms[r * cols + c];
                    let patch = map.get(r, c);
                    for k in 0..dim {
                        weighted[k] += w * patch[k];
                        plain[k] += patch[k];
                    }
                    weight_sum += w;
                }
            }
            let out = fused.get_mut(s, t);
            if weight_sum < WEIGHT_EPS {
                let slots = (a * a) as f64;
                for (o, p) in out.iter_mut().zip(&plain) {
                    *o = p / slots;
                }
            } else {
                for (o, w) in out.iter_mut().zip(&weighted) {
                    *o = w / weight_sum;
                }
            }
        }
    }
    Ok(fused)
}

/// Mean over every vector of the grid.
pub fn aggregate(fused: &PatchGrid) -> Result<Vec<f64>> {
    let cells = fused.rows * fused.cols;
    if cells == 0 {
        return Err(Error::Empty("aggregation needs a non-empty grid"));
    }
    let mut acc = vec![0.0f64; fused.dim];
    for cell in fused.data.chunks_exact(fused.dim) {
        for (a, v) in acc.iter_mut().zip(cell) {
            *a += v;
        }
    }
    let n = cells as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Single-vector summary of one finished scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneToken {
    pub scene_id: SceneId,
    pub vector: Vec<f32>,
    /// Inclusive `(first, last)` frame indices.
    pub frame_range: (u64, u64),
    pub frame_count: usize,
}

/// Full pipeline before the final narrowing to `f32`.
pub fn compress_frames(frames: &[FrameFeature], window_a: usize) -> Result<Vec<f64>> {
    let map = temporal_compress(frames)?;
    let fused = spatial_fuse(&map, window_a)?;
    aggregate(&fused)
}

/// Compresses one scene into its token.
pub fn compress_scene(
    frames: &[FrameFeature],
    config: &EngineConfig,
    scene_id: SceneId,
) -> Result<SceneToken> {
    check_dims(frames, &config.dims)?;
    let vector = compress_frames(frames, config.window_a)?
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let first = frames.first().expect("non-empty after compression");
    let last = frames.last().expect("non-empty after compression");
    Ok(SceneToken {
        scene_id,
        vector,
        frame_range: (first.frame_index(), last.frame_index()),
        frame_count: frames.len(),
    })
}

fn check_dims(frames: &[FrameFeature], dims: &Dims) -> Result<()> {
    match frames.iter().find(|f| f.dims() != *dims) {
        Some(f) => Err(Error::DimensionMismatch {
            what: "scene frame values",
            expected: dims.values_per_frame(),
            found: f.dims().values_per_frame(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(i: u64, dims: Dims, data: Vec<f32>) -> FrameFeature {
        FrameFeature::new(i, i as f64, dims, data).unwrap()
    }

    fn random_frames(rng: &mut ChaCha8Rng, m: usize, dims: Dims) -> Vec<FrameFeature> {
        (0..m)
            .map(|i| {
                let data = (0..dims.values_per_frame())
                    .map(|_| rng.gen_range(-1.0f32..1.0))
                    .collect();
                frame(i as u64, dims, data)
            })
            .collect()
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn temporal_single_frame_is_identity() {
        let dims = Dims::new(3, 2, 2).unwrap();
        let data: Vec<f32> = (0..12).map(|v| v as f32 * 0.5).collect();
        let map = temporal_compress(&[frame(0, dims, data.clone())]).unwrap();
        let expect: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        assert_eq!(map.as_slice(), expect.as_slice());
    }

    #[test]
    fn temporal_two_frame_mean() {
        let dims = Dims::new(2, 1, 1).unwrap();
        let map = temporal_compress(&[
            frame(0, dims, vec![1.0, 3.0]),
            frame(1, dims, vec![3.0, 5.0]),
        ])
        .unwrap();
        assert_eq!(map.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn temporal_rejects_empty() {
        assert!(matches!(temporal_compress(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn temporal_matches_triple_loop() {
        let dims = Dims::new(8, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames = random_frames(&mut rng, 5, dims);
        let map = temporal_compress(&frames).unwrap();
        for x in 0..4 {
            for y in 0..3 {
                for k in 0..8 {
                    let mut s = 0.0f64;
                    for f in &frames {
                        s += f.patch(x, y)[k] as f64;
                    }
                    let want = s / 5.0;
                    let got = map.get(x, y)[k];
                    assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn fuse_identical_patches_window_one() {
        let map = PatchGrid::from_vec(2, 3, 2, [0.5, -1.5].repeat(6)).unwrap();
        let fused = spatial_fuse(&map, 1).unwrap();
        assert_eq!(fused, map);
    }

    #[test]
    fn fuse_all_zero_map() {
        for a in 1..5 {
            let map = PatchGrid::zeros(3, 2, 4);
            let fused = spatial_fuse(&map, a).unwrap();
            assert!(fused.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    /// Independent window oracle: builds a padded window list, weights by |value|.
    fn window_oracle_1d(values: [[f64; 2]; 2], a: usize) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for s in 0..2 {
            for t in 0..2 {
                let mut window = Vec::new();
                for i in 0..a {
                    for j in 0..a {
                        let (r, c) = (s + i, t + j);
                        window.push(if r < 2 && c < 2 { values[r][c] } else { 0.0 });
                    }
                }
                let num: f64 = window.iter().map(|v| v.abs() * v).sum();
                let den: f64 = window.iter().map(|v| v.abs()).sum();
                out[s][t] = if den < 1e-12 {
                    window.iter().sum::<f64>() / window.len() as f64
                } else {
                    num / den
                };
            }
        }
        out
    }

    #[test]
    fn fuse_two_by_two_scalar_grid() {
        let values = [[2.0, -1.0], [0.0, 4.0]];
        let map = PatchGrid::from_vec(2, 2, 1, vec![2.0, -1.0, 0.0, 4.0]).unwrap();
        let fused = spatial_fuse(&map, 2).unwrap();
        let want = window_oracle_1d(values, 2);
        // anchor (1,1): (2*2 + 1*(-1) + 0 + 4*4) / (2 + 1 + 0 + 4) = 19/7
        assert!((fused.get(0, 0)[0] - 19.0 / 7.0).abs() < 1e-9);
        for s in 0..2 {
            for t in 0..2 {
                assert!((fused.get(s, t)[0] - want[s][t]).abs() < 1e-9, "({s},{t})");
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let g = PatchGrid::from_vec(2, 2, 2, [3.0, -1.0].repeat(4)).unwrap();
        assert_eq!(aggregate(&g).unwrap(), vec![3.0, -1.0]);
        let g = PatchGrid::from_vec(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(aggregate(&g).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn aggregate_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..5 * 3 * 4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g = PatchGrid::from_vec(5, 3, 4, data.clone()).unwrap();
        let got = aggregate(&g).unwrap();
        for k in 0..4 {
            let mut s = 0.0;
            for cell in 0..15 {
                s += data[cell * 4 + k];
            }
            assert!((got[k] - s / 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_patch_single_frame_token_is_patch() {
        let dims = Dims::new(4, 1, 1).unwrap();
        let cfg = EngineConfig::new(dims);
        let p = vec![0.25f32, -3.0, 7.5, 0.0];
        let tok = compress_scene(&[frame(4, dims, p.clone())], &cfg, SceneId(2)).unwrap();
        assert_eq!(tok.vector, p);
        assert_eq!(tok.frame_range, (4, 4));
        assert_eq!(tok.frame_count, 1);
        assert_eq!(tok.scene_id, SceneId(2));
    }

    #[test]
    fn compress_rejects_wrong_dims() {
        let dims = Dims::new(4, 1, 1).unwrap();
        let cfg = EngineConfig::new(Dims::new(4, 2, 1).unwrap());
        assert!(compress_scene(&[frame(0, dims, vec![0.0; 4])], &cfg, SceneId(0)).is_err());
    }

    #[test]
    fn zero_window_rejected() {
        assert!(spatial_fuse(&PatchGrid::zeros(1, 1, 1), 0).is_err());
    }

    proptest! {
        #[test]
        fn token_invariants(
            seed in any::<u64>(),
            m in 1usize..9,
            rows in 1usize..5,
            cols in 1usize..5,
            dim in 1usize..6,
            a in 1usize..6,
            k in -4i32..5,
        ) {
            let dims = Dims::new(dim, rows, cols).unwrap();
            let cfg = EngineConfig { window_a: a, ..EngineConfig::new(dims) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = random_frames(&mut rng, m, dims);
            let tok = compress_scene(&frames, &cfg, SceneId(0)).unwrap();
            prop_assert_eq!(tok.vector.len(), dim);
            prop_assert!(tok.vector.iter().all(|v| v.is_finite()));

            // temporal order does not matter
            let mut rev = frames.clone();
            rev.reverse();
            let base = compress_frames(&frames, a).unwrap();
            let reversed = compress_frames(&rev, a).unwrap();
            prop_assert!(rel_close(&reversed, &base, 1e-12));

            // power-of-two scaling is exact in every stage
            let c = 2f32.powi(k);
            let scaled: Vec<_> = frames
                .iter()
                .map(|f| frame(f.frame_index(), dims, f.data().iter().map(|v| v * c).collect()))
                .collect();
            let s = compress_frames(&scaled, a).unwrap();
            for (x, y) in s.iter().zip(&base) {
                prop_assert_eq!(*x, y * c as f64);
            }

            // general positive scaling holds to rounding
            let c = rng.gen_range(0.01f32..50.0);
            let scaled: Vec<_> = frames
                .iter()
                .map(|f| frame(f.frame_index(), dims, f.data().iter().map(|v| v * c).collect()))
                .collect();
            let s = compress_frames(&scaled, a).unwrap();
            let want: Vec<f64> = base.iter().map(|v| v * c as f64).collect();
            prop_assert!(rel_close(&s, &want, 1e-5));
        }
    }
}
