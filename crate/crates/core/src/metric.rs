//! Pairwise semantic similarity.
//!
//! Each candidate is embedded as a feature vector combining its normalized
//! position, log scale, log aspect ratio, base score, and deep features. A
//! linear SVM is trained on differences of such embeddings, and its decision
//! value — mapped through a logistic and averaged over both pair orderings —
//! is the similarity score in `(0, 1)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimilarityMatrix;
use crate::model::{Candidate, CandidateSet, Config};
use crate::pairs::PairSample;

/// Per-candidate embedding with fixed layout:
/// `[cx/image_w, cy/image_h, log(w*h), log(w/h), score, deep features...]`
/// where `(cx, cy)` is the box center.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector {
    pub values: Vec<f64>,
}

impl PhiVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Number of geometry/score components preceding the deep features.
pub const PHI_BASE_DIM: usize = 5;

/// Builds the candidate embedding. Log scale and log aspect make scale
/// ratios additive, matching the difference-based pair feature.
pub fn phi(c: &Candidate, image_w: f64, image_h: f64) -> PhiVector {
    let (cx, cy) = c.bbox.center();
    let mut values = Vec::with_capacity(PHI_BASE_DIM + c.features.len());
    values.push(cx / image_w);
    values.push(cy / image_h);
    values.push(c.bbox.area().ln());
    values.push((c.bbox.w / c.bbox.h).ln());
    values.push(c.score);
    values.extend_from_slice(&c.features);
    PhiVector { values }
}

pub fn phi_set(set: &CandidateSet) -> Vec<PhiVector> {
    set.candidates
        .iter()
        .map(|c| phi(c, set.image_w, set.image_h))
        .collect()
}

/// Embedding dimension for a candidate set, `None` when the set is empty.
pub fn phi_dim(set: &CandidateSet) -> Option<usize> {
    set.deep_dim().map(|d| PHI_BASE_DIM + d)
}

/// Element-wise difference `a - b`.
pub fn pair_feature(a: &PhiVector, b: &PhiVector) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "pair_feature",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect())
}

/// Learned linear SVM over standardized pair features, plus the logistic
/// scale applied to its decision value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub platt_scale: f64,
    pub feature_dim: usize,
    pub standardize_mean: Vec<f64>,
    pub standardize_std: Vec<f64>,
}

impl MetricModel {
    /// Model with identity standardization and unit logistic scale.
    pub fn with_weights(weights: Vec<f64>, bias: f64) -> MetricModel {
        let dim = weights.len();
        MetricModel {
            weights,
            bias,
            platt_scale: 1.0,
            feature_dim: dim,
            standardize_mean: vec![0.0; dim],
            standardize_std: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Schema {
            context: "metric model".into(),
            message: m,
        };
        if self.weights.len() != self.feature_dim
            || self.standardize_mean.len() != self.feature_dim
            || self.standardize_std.len() != self.feature_dim
        {
            return Err(bad(
                "weight/standardization lengths disagree with feature_dim".into(),
            ));
        }
        let finite = self.weights.iter().all(|v| v.is_finite())
            && self.standardize_mean.iter().all(|v| v.is_finite())
            && self
                .standardize_std
                .iter()
                .all(|v| v.is_finite() && *v > 0.0)
            && self.bias.is_finite();
        if !finite {
            return Err(bad("model parameters must be finite (std positive)".into()));
        }
        if !self.platt_scale.is_finite() || self.platt_scale <= 0.0 {
            return Err(bad("platt_scale must be positive".into()));
        }
        Ok(())
    }

    /// Decision value `g(v) = platt_scale * (w . v_hat + bias)` where
    /// `v_hat` is the standardized pair feature.
    pub fn decision(&self, pair: &[f64]) -> Result<f64> {
        if pair.len() != self.feature_dim {
            return Err(Error::Dimension {
                context: "decision",
                expected: self.feature_dim,
                actual: pair.len(),
            });
        }
        let mut acc = self.bias;
        for i in 0..self.feature_dim {
            acc += self.weights[i] * (pair[i] - self.standardize_mean[i]) / self.standardize_std[i];
        }
        Ok(self.platt_scale * acc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Schema {
            context: "metric model".into(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<MetricModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let model: MetricModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn hinge_objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let reg: f64 = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let margin: f64 = y * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        loss += (1.0 - margin).max(0.0);
    }
    reg + loss / xs.len() as f64
}

/// Trains the linear SVM on labeled pair features.
///
/// Hinge loss with L2 regularization of weight `1/(svm_c * n)`, minimized by
/// epoch-based subgradient descent over shuffled samples with a step of
/// `1/(lambda t)` and polynomially averaged iterates. Training stops when
/// the objective changes by less than `svm_tol` over an epoch, or after
/// `svm_max_epochs`. Deterministic given `rng_seed`.
///
/// Pair features are standardized to zero mean and unit variance per
/// dimension over the training pool; the constants are stored in the model
/// and re-applied at inference.
pub fn train_metric(samples: &[PairSample], cfg: &Config) -> Result<MetricModel> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Training("no training pairs".into()));
    }
    let dim = samples[0].feature.len();
    if dim == 0 {
        return Err(Error::Training("pair features are empty".into()));
    }
    for s in samples {
        if s.feature.len() != dim {
            return Err(Error::Dimension {
                context: "train_metric",
                expected: dim,
                actual: s.feature.len(),
            });
        }
    }
    let n = samples.len();
    let n_pos = samples.iter().filter(|s| s.label).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Training(
            "training pairs must contain both labels".into(),
        ));
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.feature) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; dim];
    for s in samples {
        for (sd, (v, m)) in std.iter_mut().zip(s.feature.iter().zip(&mean)) {
            *sd += (v - m) * (v - m);
        }
    }
    for sd in &mut std {
        *sd = (*sd / n as f64).sqrt();
        if *sd < 1e-12 {
            *sd = 1.0;
        }
    }

    // Standardize and append the constant bias feature.
    let xs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut x: Vec<f64> = s
                .feature
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, sd))| (v - m) / sd)
                .collect();
            x.push(1.0);
            x
        })
        .collect();
    let ys: Vec<f64> = samples
        .iter()
        .map(|s| if s.label { 1.0 } else { -1.0 })
        .collect();

    let lambda = 1.0 / (cfg.svm_c * n as f64);
    let mut w = vec![0.0; dim + 1];
    let mut w_avg = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut t: u64 = 0;
    let mut prev_obj = f64::INFINITY;

    for _ in 0..cfg.svm_max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin: f64 = ys[i] * w.iter().zip(&xs[i]).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            for wv in &mut w {
                *wv *= shrink;
            }
            if margin < 1.0 {
                for (wv, xv) in w.iter_mut().zip(&xs[i]) {
                    *wv += eta * ys[i] * xv;
                }
            }
            let rho = 2.0 / (t as f64 + 1.0);
            for (av, wv) in w_avg.iter_mut().zip(&w) {
                *av += rho * (wv - *av);
            }
        }
        let obj = hinge_objective(&w_avg, &xs, &ys, lambda);
        if (prev_obj - obj).abs() < cfg.svm_tol {
            break;
        }
        prev_obj = obj;
    }

    let model = MetricModel {
        weights: w_avg[..dim].to_vec(),
        bias: w_avg[dim],
        platt_scale: 1.0,
        feature_dim: dim,
        standardize_mean: mean,
        standardize_std: std,
    };
    model.validate()?;
    Ok(model)
}

/// Similarity in `(0, 1)`:
/// `s = 1/2 (sigma(g(a - b)) + sigma(g(b - a)))`.
///
/// Averaging over both orderings makes `s(a, b) == s(b, a)` exactly, since
/// the same two terms are summed either way.
pub fn similarity(model: &MetricModel, a: &PhiVector, b: &PhiVector) -> Result<f64> {
    let forward = model.decision(&pair_feature(a, b)?)?;
    let backward = model.decision(&pair_feature(b, a)?)?;
    Ok(0.5 * (sigmoid(forward) + sigmoid(backward)))
}

/// Full pairwise similarity matrix: unit diagonal, symmetric by
/// construction.
pub fn similarity_matrix(model: &MetricModel, phis: &[PhiVector]) -> Result<SimilarityMatrix> {
    let n = phis.len();
    if n == 0 {
        return Err(Error::Parameter(
            "similarity_matrix requires at least one candidate".into(),
        ));
    }
    for p in phis {
        if p.len() != model.feature_dim {
            return Err(Error::Dimension {
                context: "similarity_matrix",
                expected: model.feature_dim,
                actual: p.len(),
            });
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let s = similarity(model, &phis[i], &phis[j])?;
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix::from_raw(n, data))
}
