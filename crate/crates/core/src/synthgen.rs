//! Seeded synthetic corpora with planted face clusters.
//!
//! Each image gets one crowd latent: a region center, base scale, and a
//! texture prototype vector. Face candidates are small perturbations of the
//! latent with scores from a high distribution; background candidates are
//! scattered uniformly with independent texture vectors and scores from a
//! low distribution. `score_overlap` controls how far the two score ranges
//! cross the vote threshold, which is what gives refinement something to
//! recover and something to suppress.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{write_jsonl, BoundingBox, Candidate, CandidateSet, GroundTruth};
use crate::seed::mix;

pub const IMAGE_W: f64 = 1024.0;
pub const IMAGE_H: f64 = 1024.0;

/// Generator parameters. The defaults define the standard corpus used by
/// the acceptance suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub n_images: usize,
    pub faces_per_image: usize,
    pub bg_per_image: usize,
    /// Relative std of face location/scale around the crowd latent.
    pub cluster_spread: f64,
    /// Gaussian noise added per dimension to the texture prototype.
    pub feature_noise: f64,
    /// Degree of overlap between the face and background score ranges.
    pub score_overlap: f64,
    pub d_deep: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> GenSpec {
        GenSpec {
            n_images: 20,
            faces_per_image: 15,
            bg_per_image: 25,
            cluster_spread: 0.05,
            feature_noise: 0.1,
            score_overlap: 0.3,
            d_deep: 16,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Error::Parameter(m.into());
        if !self.cluster_spread.is_finite() || self.cluster_spread < 0.0 {
            return Err(bad("cluster_spread must be non-negative"));
        }
        if !self.feature_noise.is_finite() || self.feature_noise < 0.0 {
            return Err(bad("feature_noise must be non-negative"));
        }
        if !self.score_overlap.is_finite() || !(0.0..=1.0).contains(&self.score_overlap) {
            return Err(bad("score_overlap must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<GenSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let spec: GenSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-image face/non-face labels, aligned with candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabels {
    pub image_id: String,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub sets: Vec<CandidateSet>,
    pub labels: Vec<ImageLabels>,
    pub ground_truth: Vec<GroundTruth>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Normal draw clamped to three sigma, used for box jitter so a face
/// candidate can never wander arbitrarily far from its ground truth.
fn jitter(rng: &mut ChaCha8Rng) -> f64 {
    normal(rng).clamp(-3.0, 3.0)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
}

/// Corpus-wide face-texture direction. Face prototypes lean toward this
/// axis while background vectors carry no component along it, the way
/// detector features hold a consistent face-ness activation on top of
/// per-crowd appearance while background patches activate none of it.
fn face_axis(spec: &GenSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, u64::MAX));
    unit_vector(&mut rng, spec.d_deep)
}

/// Random unit vector orthogonal to `axis` (falls back to the raw vector
/// when the complement is degenerate).
fn background_vector(rng: &mut ChaCha8Rng, axis: &[f64]) -> Vec<f64> {
    let mut v = unit_vector(rng, axis.len());
    let proj: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    let mut residual: Vec<f64> = v.iter().zip(axis).map(|(a, b)| a - proj * b).collect();
    let norm = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-9 {
        for x in &mut residual {
            *x /= norm;
        }
        v = residual;
    }
    v
}

fn generate_image(
    spec: &GenSpec,
    axis: &[f64],
    index: usize,
) -> (CandidateSet, ImageLabels, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, index as u64));
    let image_id = format!("img_{index:04}");

    // Crowd latent: region center, base scale, texture prototype.
    let cx: f64 = rng.random_range(0.25..0.75) * IMAGE_W;
    let cy: f64 = rng.random_range(0.25..0.75) * IMAGE_H;
    let scale: f64 = rng.random_range(30.0..80.0);
    let aspect: f64 = rng.random_range(0.8..1.25);
    let latent_w = scale * aspect.sqrt();
    let latent_h = scale / aspect.sqrt();
    let latent = BoundingBox::new(cx - 0.5 * latent_w, cy - 0.5 * latent_h, latent_w, latent_h);
    let mut prototype = unit_vector(&mut rng, spec.d_deep);
    for (p, a) in prototype.iter_mut().zip(axis) {
        *p += 4.0 * a;
    }
    if spec.d_deep > 0 {
        normalize(&mut prototype);
    }

    let face_score_lo = 0.55 - 0.5 * spec.score_overlap;
    let face_score_hi = 0.85;
    let bg_score_hi = 0.45 + 0.5 * spec.score_overlap;

    let mut candidates = Vec::with_capacity(spec.faces_per_image + spec.bg_per_image);
    let mut labels = Vec::with_capacity(candidates.capacity());

    for _ in 0..spec.faces_per_image {
        let dx = spec.cluster_spread * scale * jitter(&mut rng);
        let dy = spec.cluster_spread * scale * jitter(&mut rng);
        let w = latent_w * (spec.cluster_spread * jitter(&mut rng)).exp();
        let h = latent_h * (spec.cluster_spread * jitter(&mut rng)).exp();
        let score = rng.random_range(face_score_lo..face_score_hi);
        let features: Vec<f64> = prototype
            .iter()
            .map(|p| p + spec.feature_noise * normal(&mut rng))
            .collect();
        candidates.push(Candidate {
            bbox: BoundingBox::new(cx + dx - 0.5 * w, cy + dy - 0.5 * h, w, h),
            score,
            features,
        });
        labels.push(1);
    }

    for _ in 0..spec.bg_per_image {
        let s: f64 = rng.random_range(20.0..150.0);
        let aspect: f64 = rng.random_range(0.5..2.0);
        let w = s * aspect.sqrt();
        let h = s / aspect.sqrt();
        let x = rng.random_range(0.0..(IMAGE_W - w));
        let y = rng.random_range(0.0..(IMAGE_H - h));
        let score = rng.random_range(0.05..bg_score_hi);
        let features = background_vector(&mut rng, axis);
        candidates.push(Candidate {
            bbox: BoundingBox::new(x, y, w, h),
            score,
            features,
        });
        labels.push(0);
    }

    let set = CandidateSet {
        image_id: image_id.clone(),
        image_w: IMAGE_W,
        image_h: IMAGE_H,
        candidates,
    };
    let gt = GroundTruth {
        image_id: image_id.clone(),
        boxes: vec![latent; spec.faces_per_image],
    };
    (set, ImageLabels { image_id, labels }, gt)
}

/// Generates the corpus. Fully deterministic given `spec.seed`; each image
/// draws from its own derived stream, so images are independent.
pub fn generate(spec: &GenSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let axis = face_axis(spec);
    let mut sets = Vec::with_capacity(spec.n_images);
    let mut labels = Vec::with_capacity(spec.n_images);
    let mut ground_truth = Vec::with_capacity(spec.n_images);
    for index in 0..spec.n_images {
        let (set, lab, gt) = generate_image(spec, &axis, index);
        sets.push(set);
        labels.push(lab);
        ground_truth.push(gt);
    }
    Ok(GeneratedCorpus {
        sets,
        labels,
        ground_truth,
    })
}

pub fn write_labels(labels: &[ImageLabels], path: &Path) -> Result<()> {
    write_jsonl(labels, path)
}
