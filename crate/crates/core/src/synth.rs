//! Planted-scene stream generator.
//!
//! Each scene gets a unit-norm center orthogonalized against the centers of
//! up to `d - 1` preceding scenes. A frame's patches are random positive
//! multiples of its scene center plus Gaussian noise. Every generated frame
//! is certified against the boundary rule (similarity to its scene's first
//! frame and to its predecessor) and resampled until it passes, so the
//! ground-truth boundaries are exactly the scene starts.
//!
//! Randomness comes from ChaCha8 seeded via `seed_from_u64`; normals use
//! Box-Muller on `f64` uniforms so fixtures are reproducible elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Dims, FrameFeature};
use crate::oracle::{oracle_cosine, oracle_mean_embedding};

const FRAME_RETRIES: usize = 256;
const CENTER_RETRIES: usize = 64;

/// Parameters of a planted stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub scene_sizes: Vec<usize>,
    #[serde(flatten)]
    pub dims: Dims,
    /// Every intra-scene anchor and adjacent cosine is at least this.
    pub intra_sim_min: f64,
    /// Every cross-boundary anchor and adjacent cosine is at most this.
    pub inter_sim_max: f64,
    /// Expected norm of the Gaussian noise added to each unit-norm patch.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
}

impl PlantedSpec {
    pub fn new(scene_sizes: Vec<usize>, dims: Dims, seed: u64) -> Self {
        Self {
            scene_sizes,
            dims,
            intra_sim_min: 0.9,
            inter_sim_max: 0.5,
            noise_sigma: 0.1,
            seed,
            frame_interval: 0.04,
        }
    }

    pub fn total_frames(&self) -> usize {
        self.scene_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.scene_sizes.is_empty() || self.scene_sizes.contains(&0) {
            return Err(Error::Generator("scene sizes must be positive".into()));
        }
        if self.intra_sim_min.partial_cmp(&self.inter_sim_max) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::Generator(
                "intra_sim_min must exceed inter_sim_max".into(),
            ));
        }
        if !(self.intra_sim_min <= 1.0 && self.inter_sim_max >= -1.0) {
            return Err(Error::Generator("similarity bounds outside [-1, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Generator(
                "noise_sigma must be finite and >= 0".into(),
            ));
        }
        if !(self.frame_interval > 0.0 && self.frame_interval.is_finite()) {
            return Err(Error::Generator("frame_interval must be positive".into()));
        }
        if self.dims.dim < 2 && self.scene_sizes.len() > 1 {
            return Err(Error::Generator(
                "distinct scenes need d >= 2; raise d".into(),
            ));
        }
        Ok(())
    }
}

/// A generated stream with its planted structure.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedStream {
    pub frames: Vec<FrameFeature>,
    /// Index of the first frame of every scene after the first.
    pub boundaries: Vec<u64>,
    /// Unit-norm center of each scene.
    pub centers: Vec<Vec<f32>>,
}

impl PlantedStream {
    /// Scene number of every frame.
    pub fn scene_of(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.frames.len());
        let mut scene = 0;
        for f in &self.frames {
            if self.boundaries.get(scene) == Some(&f.frame_index()) {
                scene += 1;
            }
            out.push(scene);
        }
        out
    }

    /// Ground truth as JSON: `{"boundaries": [...], "scene_sizes": [...], "frames": n}`.
    pub fn truth_json(&self, spec: &PlantedSpec) -> serde_json::Value {
        serde_json::json!({
            "boundaries": self.boundaries,
            "scene_sizes": spec.scene_sizes,
            "frames": self.frames.len(),
        })
    }
}

/// Standard normal sample via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn draw_center(rng: &mut ChaCha8Rng, dim: usize, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
    let keep = previous.len().min(dim.saturating_sub(1));
    let basis = &previous[previous.len() - keep..];
    for _ in 0..CENTER_RETRIES {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        // two Gram-Schmidt passes for numerical orthogonality
        for _ in 0..2 {
            for b in basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
    }
    Err(Error::Generator(
        "could not draw an orthogonal scene center".into(),
    ))
}

fn draw_frame(
    rng: &mut ChaCha8Rng,
    index: u64,
    spec: &PlantedSpec,
    center: &[f64],
) -> Result<FrameFeature> {
    let dims = spec.dims;
    // per-component scale keeps the expected noise norm at noise_sigma
    let sigma = spec.noise_sigma / (dims.dim as f64).sqrt();
    let mut data = Vec::with_capacity(dims.values_per_frame());
    for _ in 0..dims.patches() {
        let gain = rng.gen_range(0.5..1.5);
        for &c in center {
            data.push((gain * c + sigma * gaussian(rng)) as f32);
        }
    }
    FrameFeature::new(index, index as f64 * spec.frame_interval, dims, data)
}

/// Generates a certified planted stream.
pub fn generate(spec: &PlantedSpec) -> Result<PlantedStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.scene_sizes.len());
    let mut frames: Vec<FrameFeature> = Vec::with_capacity(spec.total_frames());
    let mut embeddings: Vec<Vec<f64>> = Vec::with_capacity(spec.total_frames());
    let mut boundaries = Vec::new();
    let mut prev_anchor: Option<usize> = None;

    for (scene, &size) in spec.scene_sizes.iter().enumerate() {
        let center = draw_center(&mut rng, spec.dims.dim, &centers)?;
        let start = frames.len();
        if scene > 0 {
            boundaries.push(start as u64);
        }
        for offset in 0..size {
            let index = frames.len();
            let mut accepted = None;
            for _ in 0..FRAME_RETRIES {
                let frame = draw_frame(&mut rng, index as u64, spec, &center)?;
                let emb = oracle_mean_embedding(&frame);
                let ok = if offset == 0 {
                    match prev_anchor {
                        None => true,
                        Some(a) => {
                            oracle_cosine(&emb, &embeddings[a]) <= spec.inter_sim_max
                                && oracle_cosine(&emb, &embeddings[index - 1]) <= spec.inter_sim_max
                        }
                    }
                } else {
                    oracle_cosine(&emb, &embeddings[start]) >= spec.intra_sim_min
                        && oracle_cosine(&emb, &embeddings[index - 1]) >= spec.intra_sim_min
                };
                if ok {
                    accepted = Some((frame, emb));
                    break;
                }
            }
            let (frame, emb) = accepted.ok_or_else(|| {
                Error::Generator(format!(
                    "frame {index} failed certification after {FRAME_RETRIES} draws; \
                     lower noise_sigma or widen the similarity bounds"
                ))
            })?;
            frames.push(frame);
            embeddings.push(emb);
        }
        prev_anchor = Some(start);
        centers.push(center);
    }

    let stream = PlantedStream {
        frames,
        boundaries,
        centers: centers
            .iter()
            .map(|c| c.iter().map(|&v| v as f32).collect())
            .collect(),
    };
    certify(&stream, spec)?;
    Ok(stream)
}

/// Re-checks every intra-scene and cross-boundary similarity of a stream.
pub fn certify(stream: &PlantedStream, spec: &PlantedSpec) -> Result<()> {
    let emb: Vec<Vec<f64>> = stream.frames.iter().map(oracle_mean_embedding).collect();
    let scenes = stream.scene_of();
    let mut anchor = 0usize;
    for i in 1..emb.len() {
        let s_adj = oracle_cosine(&emb[i], &emb[i - 1]);
        let s_anchor = oracle_cosine(&emb[i], &emb[anchor]);
        if scenes[i] != scenes[i - 1] {
            if s_anchor > spec.inter_sim_max || s_adj > spec.inter_sim_max {
                return Err(Error::Generator(format!(
                    "boundary frame {i} too similar to previous scene"
                )));
            }
            anchor = i;
        } else if s_anchor < spec.intra_sim_min || s_adj < spec.intra_sim_min {
            return Err(Error::Generator(format!(
                "frame {i} not coherent with its scene"
            )));
        }
    }
    Ok(())
}

/// Random scene sizes in `lo..=hi` adding up to exactly `frames`; only the
/// last scene may fall below `lo`.
pub fn scene_sizes_for(frames: usize, lo: usize, hi: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut sizes = Vec::new();
    let mut total = 0;
    while total < frames {
        let s = rng.gen_range(lo..=hi).min(frames - total);
        sizes.push(s);
        total += s;
    }
    sizes
}
