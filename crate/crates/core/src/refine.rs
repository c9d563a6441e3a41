//! End-to-end per-image refinement: similarity matrix, edge weights,
//! Laplacian, spectral partition, then a face/non-face vote per group.
//!
//! Kept detections retain their original base scores — refinement decides
//! membership, never rescoring — so precision–recall comparisons against the
//! base detector stay meaningful.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ImageDetections, ScoredDetection};
use crate::graph::{edge_weights, laplacian, Laplacian, SimilarityMatrix, WeightMatrix};
use crate::metric::{phi_dim, phi_set, similarity_matrix, MetricModel};
use crate::model::{read_jsonl, write_jsonl, BoundingBox, CandidateSet, Config};
use crate::spectral::spectral_cluster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Face,
    Nonface,
}

/// Outcome of the vote over one group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupVerdict {
    pub group: usize,
    pub verdict: Verdict,
    pub votes_for: usize,
    pub votes_against: usize,
}

impl GroupVerdict {
    pub fn size(&self) -> usize {
        self.votes_for + self.votes_against
    }
}

/// Refinement result for one image. `kept` holds `(candidate index, original
/// score)` for every member of a face-verdict group, indices ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedDetections {
    pub image_id: String,
    pub kept: Vec<(usize, f64)>,
    pub group_verdicts: Vec<GroupVerdict>,
}

/// Intermediate stages captured for debugging dumps.
#[derive(Debug, Clone)]
pub struct StageMatrices {
    pub similarity: SimilarityMatrix,
    pub weights: WeightMatrix,
    pub laplacian: Laplacian,
}

#[derive(Debug, Clone, Default)]
pub struct ImageDiagnostics {
    /// Ascending Laplacian eigenvalues (empty for n <= 1).
    pub eigenvalues: Vec<f64>,
    pub matrices: Option<StageMatrices>,
}

/// Majority vote of a group: each member votes face iff its score reaches
/// `vote_threshold`; the group is a face group iff strictly more than half
/// vote face, with exact ties resolved by comparing the mean member score
/// against the threshold.
pub fn vote_group(members: &[usize], scores: &[f64], cfg: &Config) -> Result<GroupVerdict> {
    if members.is_empty() {
        return Err(Error::Partition("vote over an empty group".into()));
    }
    let tau = cfg.vote_threshold;
    let votes_for = members.iter().filter(|&&m| scores[m] >= tau).count();
    let votes_against = members.len() - votes_for;
    let verdict = if 2 * votes_for > members.len() {
        Verdict::Face
    } else if 2 * votes_for == members.len() {
        let mean = members.iter().map(|&m| scores[m]).sum::<f64>() / members.len() as f64;
        if mean >= tau {
            Verdict::Face
        } else {
            Verdict::Nonface
        }
    } else {
        Verdict::Nonface
    };
    Ok(GroupVerdict {
        group: 0,
        verdict,
        votes_for,
        votes_against,
    })
}

fn refine_with(
    set: &CandidateSet,
    model: &MetricModel,
    cfg: &Config,
    capture_matrices: bool,
) -> Result<(RefinedDetections, ImageDiagnostics)> {
    cfg.validate()?;
    let n = set.len();
    let scores: Vec<f64> = set.candidates.iter().map(|c| c.score).collect();

    if n == 0 {
        return Ok((
            RefinedDetections {
                image_id: set.image_id.clone(),
                kept: Vec::new(),
                group_verdicts: Vec::new(),
            },
            ImageDiagnostics::default(),
        ));
    }

    if n == 1 {
        let mut verdict = vote_group(&[0], &scores, cfg)?;
        verdict.group = 0;
        let kept = if verdict.verdict == Verdict::Face {
            vec![(0, scores[0])]
        } else {
            Vec::new()
        };
        return Ok((
            RefinedDetections {
                image_id: set.image_id.clone(),
                kept,
                group_verdicts: vec![verdict],
            },
            ImageDiagnostics::default(),
        ));
    }

    let dim = phi_dim(set).expect("non-empty set");
    if dim != model.feature_dim {
        return Err(Error::Dimension {
            context: "refine_image",
            expected: model.feature_dim,
            actual: dim,
        });
    }

    let phis = phi_set(set);
    let similarity = similarity_matrix(model, &phis)?;
    let weights = edge_weights(&similarity, cfg);
    let lap = laplacian(&weights);
    let eigenvalues = lap.eigh()?.eigenvalues;

    // Every image draws an independent stream from the global seed and its
    // id, so corpus order and worker count cannot change the outcome.
    let image_cfg = Config {
        rng_seed: crate::seed::mix_str(cfg.rng_seed, &set.image_id),
        ..cfg.clone()
    };
    let partition = spectral_cluster(&lap, &image_cfg)?;

    let mut kept = Vec::new();
    let mut group_verdicts = Vec::with_capacity(partition.k());
    for (g, members) in partition.groups().iter().enumerate() {
        let mut verdict = vote_group(members, &scores, cfg)?;
        verdict.group = g;
        if verdict.verdict == Verdict::Face {
            kept.extend(members.iter().map(|&m| (m, scores[m])));
        }
        group_verdicts.push(verdict);
    }
    kept.sort_by_key(|&(idx, _)| idx);

    let diagnostics = ImageDiagnostics {
        eigenvalues,
        matrices: capture_matrices.then_some(StageMatrices {
            similarity,
            weights,
            laplacian: lap,
        }),
    };
    Ok((
        RefinedDetections {
            image_id: set.image_id.clone(),
            kept,
            group_verdicts,
        },
        diagnostics,
    ))
}

/// Refines a single image. `N = 0` gives an empty result; `N = 1` keeps the
/// lone candidate iff its score reaches the vote threshold.
pub fn refine_image(
    set: &CandidateSet,
    model: &MetricModel,
    cfg: &Config,
) -> Result<RefinedDetections> {
    refine_with(set, model, cfg, false).map(|(r, _)| r)
}

/// As [`refine_image`], additionally reporting eigenvalues and (optionally)
/// the intermediate matrices.
pub fn refine_image_diag(
    set: &CandidateSet,
    model: &MetricModel,
    cfg: &Config,
    capture_matrices: bool,
) -> Result<(RefinedDetections, ImageDiagnostics)> {
    refine_with(set, model, cfg, capture_matrices)
}

/// A per-image failure, reported without aborting the rest of the corpus.
#[derive(Debug)]
pub struct ImageFailure {
    pub image_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct CorpusResult {
    /// Successful refinements in input order.
    pub refined: Vec<RefinedDetections>,
    pub failures: Vec<ImageFailure>,
}

/// Refines every image independently, preserving input order. Per-image
/// errors are collected, not propagated.
pub fn refine_corpus(sets: &[CandidateSet], model: &MetricModel, cfg: &Config) -> CorpusResult {
    let mut result = CorpusResult::default();
    for set in sets {
        match refine_image(set, model, cfg) {
            Ok(r) => result.refined.push(r),
            Err(error) => result.failures.push(ImageFailure {
                image_id: set.image_id.clone(),
                error,
            }),
        }
    }
    result
}

#[derive(Serialize, Deserialize)]
struct DetectionWire {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct GroupWire {
    id: usize,
    verdict: Verdict,
    size: usize,
}

#[derive(Serialize, Deserialize)]
struct RefinedWire {
    image_id: String,
    detections: Vec<DetectionWire>,
    groups: Vec<GroupWire>,
}

/// Writes refined detections as JSONL; boxes are looked up in the candidate
/// sets the refinement ran on.
pub fn write_refined(
    results: &[RefinedDetections],
    sets: &[CandidateSet],
    path: &Path,
) -> Result<()> {
    let by_id: HashMap<&str, &CandidateSet> =
        sets.iter().map(|s| (s.image_id.as_str(), s)).collect();
    let mut wires = Vec::with_capacity(results.len());
    for r in results {
        let set = by_id.get(r.image_id.as_str()).ok_or_else(|| {
            Error::InputMismatch(format!("no candidate set for image {}", r.image_id))
        })?;
        let detections = r
            .kept
            .iter()
            .map(|&(idx, score)| {
                let b = set.candidates[idx].bbox;
                DetectionWire {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    score,
                }
            })
            .collect();
        let groups = r
            .group_verdicts
            .iter()
            .map(|g| GroupWire {
                id: g.group,
                verdict: g.verdict,
                size: g.size(),
            })
            .collect();
        wires.push(RefinedWire {
            image_id: r.image_id.clone(),
            detections,
            groups,
        });
    }
    write_jsonl(&wires, path)
}

/// Reads a refined-detections file back as per-image scored boxes.
pub fn read_refined(path: &Path) -> Result<Vec<ImageDetections>> {
    let mut out = Vec::new();
    for (_, wire) in read_jsonl::<RefinedWire>(path)? {
        out.push(ImageDetections {
            image_id: wire.image_id,
            detections: wire
                .detections
                .into_iter()
                .map(|d| ScoredDetection {
                    bbox: BoundingBox::new(d.x, d.y, d.w, d.h),
                    score: d.score,
                })
                .collect(),
        });
    }
    Ok(out)
}
