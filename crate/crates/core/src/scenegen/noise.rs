use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GroundTruthScene;
use crate::{Error, Result};

/// Per-pixel semantic and boundary probabilities aligned with a depth image.
///
/// `semantic` is pixel-major with `num_classes + 1` channels per pixel;
/// channel 0 is background and channel `l` is class id `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMaps {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub semantic: Vec<f32>,
    pub boundary: Vec<f32>,
}

impl PredictionMaps {
    pub fn new(width: usize, height: usize, num_classes: usize, semantic: Vec<f32>, boundary: Vec<f32>) -> Result<Self> {
        let maps = PredictionMaps {
            width,
            height,
            num_classes,
            semantic,
            boundary,
        };
        maps.validate()?;
        Ok(maps)
    }

    /// All-background maps with no boundary evidence.
    pub fn empty(width: usize, height: usize, num_classes: usize) -> Self {
        let channels = num_classes + 1;
        let mut semantic = vec![0.0; width * height * channels];
        for p in 0..width * height {
            semantic[p * channels] = 1.0;
        }
        PredictionMaps {
            width,
            height,
            num_classes,
            semantic,
            boundary: vec![0.0; width * height],
        }
    }

    pub fn channels(&self) -> usize {
        self.num_classes + 1
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_count();
        if self.semantic.len() != n * self.channels() || self.boundary.len() != n {
            return Err(Error::InvalidImage("prediction map sizes do not match".into()));
        }
        let in_unit = |v: &f32| (0.0..=1.0).contains(v);
        if !self.boundary.iter().all(in_unit) || !self.semantic.iter().all(in_unit) {
            return Err(Error::InvalidImage("probabilities must lie in [0, 1]".into()));
        }
        for p in 0..n {
            let s: f64 = self.pixel_semantic(p).iter().map(|&v| v as f64).sum();
            if (s - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidImage(format!("semantic channels at pixel {p} sum to {s}")));
            }
        }
        Ok(())
    }

    pub fn pixel_semantic(&self, pixel: usize) -> &[f32] {
        let c = self.channels();
        &self.semantic[pixel * c..(pixel + 1) * c]
    }

    /// `P_l(p)` for class id `class_id`.
    pub fn class_prob(&self, pixel: usize, class_id: u32) -> f64 {
        self.semantic[pixel * self.channels() + class_id as usize] as f64
    }

    pub fn boundary_prob(&self, pixel: usize) -> f64 {
        self.boundary[pixel] as f64
    }

    /// Most probable channel (0 = background); ties go to the lower id.
    pub fn label(&self, pixel: usize) -> u32 {
        let s = self.pixel_semantic(pixel);
        let mut best = 0;
        for (c, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = c;
            }
        }
        best as u32
    }
}

/// Parameters of the stand-in for a segmentation network's output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Mixing weight `η` of the uniform distribution into one-hot labels.
    pub semantic_smoothing: f64,
    /// Standard deviation `σ` of per-channel logit noise.
    pub semantic_logit_sigma: f64,
    /// Chebyshev dilation radius `r` of the boundary probability ramp.
    pub boundary_dilation: usize,
    /// False-positive speckle rate `ρ`.
    pub speckle_rate: f64,
    /// False-negative dropout rate `ν`.
    pub dropout_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            semantic_smoothing: 0.1,
            semantic_logit_sigma: 0.5,
            boundary_dilation: 1,
            speckle_rate: 0.02,
            dropout_rate: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            semantic_smoothing: 0.0,
            semantic_logit_sigma: 0.0,
            boundary_dilation: 0,
            speckle_rate: 0.0,
            dropout_rate: 0.0,
        }
    }
}

/// Simulated probability maps for a ground-truth scene.
///
/// Semantic: one-hot labels mixed toward uniform by `η`, perturbed in logit
/// space by `σ` and renormalized. Boundary: the ground-truth mask dilated by
/// `r` pixels with a linear ramp `1 − k/(r+1)` at Chebyshev distance `k`;
/// every ramp pixel is then dropped to 0 with probability `ν`, and every
/// pixel is raised to `U(0.5, 1)` with probability `ρ`.
pub fn simulate_predictions(gt: &GroundTruthScene, noise: &NoiseConfig, seed: u64) -> PredictionMaps {
    let (w, h) = (gt.class_labels.width, gt.class_labels.height);
    let k = gt.num_classes();
    let channels = k + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = noise.semantic_smoothing;
    let mut semantic = vec![0f32; w * h * channels];
    let mut probs = vec![0f64; channels];
    for p in 0..w * h {
        let label = gt.class_labels.data[p] as usize;
        for (c, v) in probs.iter_mut().enumerate() {
            *v = (1.0 - eta) * if c == label { 1.0 } else { 0.0 } + eta / channels as f64;
        }
        if noise.semantic_logit_sigma > 0.0 {
            for v in probs.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = if *v > 0.0 { v.ln() + noise.semantic_logit_sigma * z } else { f64::NEG_INFINITY };
            }
            let m = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in probs.iter_mut() {
                *v = (*v - m).exp();
            }
        }
        let total: f64 = probs.iter().sum();
        for (c, v) in probs.iter().enumerate() {
            semantic[p * channels + c] = (v / total) as f32;
        }
    }

    let r = noise.boundary_dilation as isize;
    let mut boundary = vec![0f32; w * h];
    for p in 0..w * h {
        if !gt.boundary.data[p] {
            continue;
        }
        let (x, y) = gt.boundary.coords(p);
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let dist = dx.abs().max(dy.abs()) as f32;
                let v = 1.0 - dist / (r as f32 + 1.0);
                let q = ny as usize * w + nx as usize;
                boundary[q] = boundary[q].max(v);
            }
        }
    }
    for v in boundary.iter_mut() {
        if *v > 0.0 && noise.dropout_rate > 0.0 && rng.random::<f64>() < noise.dropout_rate {
            *v = 0.0;
        }
        if noise.speckle_rate > 0.0 && rng.random::<f64>() < noise.speckle_rate {
            *v = v.max(rng.random_range(0.5..1.0));
        }
    }
    PredictionMaps {
        width: w,
        height: h,
        num_classes: k,
        semantic,
        boundary,
    }
}
