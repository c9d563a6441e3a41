//! Domain types, configuration, and the JSON Lines data formats shared by
//! every pipeline stage.
//!
//! All types here are immutable value types once constructed and can be
//! shared freely between worker threads. Real-valued fields are serialized
//! in decimal at full double precision, so a write/read round trip
//! reproduces them exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates; `(x, y)` is the top-left corner.
///
/// Boxes may extend past image bounds; clipping is never assumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err("box position must be finite".into());
        }
        if !self.w.is_finite() || !self.h.is_finite() || self.w <= 0.0 || self.h <= 0.0 {
            return Err("box width and height must be finite and positive".into());
        }
        Ok(())
    }
}

/// One detection hypothesis: box geometry, base detector score, and the
/// externally supplied deep feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    /// Base classification score in `[0, 1]`.
    pub score: f64,
    /// Deep features, length constant within a [`CandidateSet`] (may be 0).
    pub features: Vec<f64>,
}

impl Candidate {
    fn check(&self) -> std::result::Result<(), String> {
        self.bbox.check()?;
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err("features must be finite".into());
        }
        Ok(())
    }
}

/// All candidates of one image; the unit of refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub image_id: String,
    pub image_w: f64,
    pub image_h: f64,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Deep-feature length, `None` for an empty set.
    pub fn deep_dim(&self) -> Option<usize> {
        self.candidates.first().map(|c| c.features.len())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Schema {
            context: self.image_id.clone(),
            message,
        };
        if !self.image_w.is_finite()
            || !self.image_h.is_finite()
            || self.image_w <= 0.0
            || self.image_h <= 0.0
        {
            return Err(fail("image dimensions must be finite and positive".into()));
        }
        let dim = self.deep_dim().unwrap_or(0);
        for (idx, c) in self.candidates.iter().enumerate() {
            c.check()
                .map_err(|m| fail(format!("candidate {idx}: {m}")))?;
            if c.features.len() != dim {
                return Err(fail(format!(
                    "candidate {idx}: feature length {} differs from {} in the same set",
                    c.features.len(),
                    dim
                )));
            }
        }
        Ok(())
    }
}

/// Annotated face boxes of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub boxes: Vec<BoundingBox>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        for (idx, b) in self.boxes.iter().enumerate() {
            b.check().map_err(|m| Error::Schema {
                context: self.image_id.clone(),
                message: format!("ground-truth box {idx}: {m}"),
            })?;
        }
        Ok(())
    }
}

/// How similarity scores map onto graph edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `w = exp(-(1 - S) / (2 delta^2))`: high similarity gives a heavy edge.
    Dissimilarity,
    /// `w = exp(-S / (2 delta^2))` taken literally.
    Literal,
}

/// Pipeline configuration. A config file is a single JSON object with these
/// field names; absent fields take the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Fraction of candidates (by descending score) treated as reliable
    /// faces when building training pairs.
    pub top_frac: f64,
    /// Fraction treated as reliable background.
    pub bottom_frac: f64,
    /// Kernel bandwidth for edge weights.
    pub delta: f64,
    pub weight_mode: WeightMode,
    /// Upper bound for the eigengap choice of the group count.
    pub k_max: usize,
    /// Score at or above which a candidate votes "face".
    pub vote_threshold: f64,
    /// Overlap required to match a detection to a ground-truth box.
    pub iou_threshold: f64,
    /// Seed for every random choice in the pipeline.
    pub rng_seed: u64,
    /// SVM cost parameter.
    pub svm_c: f64,
    pub svm_max_epochs: usize,
    pub svm_tol: f64,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            top_frac: 0.10,
            bottom_frac: 0.10,
            delta: 1.0,
            weight_mode: WeightMode::Dissimilarity,
            k_max: 10,
            vote_threshold: 0.5,
            iou_threshold: 0.5,
            rng_seed: 0,
            svm_c: 1.0,
            svm_max_epochs: 200,
            svm_tol: 1e-6,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Error::Parameter(m);
        let frac_ok = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !frac_ok(self.top_frac) || !frac_ok(self.bottom_frac) {
            return Err(fail("top_frac and bottom_frac must lie in [0, 1]".into()));
        }
        if self.top_frac + self.bottom_frac > 1.0 {
            return Err(fail(format!(
                "top_frac + bottom_frac = {} exceeds 1",
                self.top_frac + self.bottom_frac
            )));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(fail(format!("delta must be positive, got {}", self.delta)));
        }
        if self.k_max < 1 {
            return Err(fail("k_max must be at least 1".into()));
        }
        if !frac_ok(self.vote_threshold) {
            return Err(fail("vote_threshold must lie in [0, 1]".into()));
        }
        if !frac_ok(self.iou_threshold) {
            return Err(fail("iou_threshold must lie in [0, 1]".into()));
        }
        if !self.svm_c.is_finite() || self.svm_c <= 0.0 {
            return Err(fail(format!("svm_c must be positive, got {}", self.svm_c)));
        }
        if self.svm_max_epochs < 1 {
            return Err(fail("svm_max_epochs must be at least 1".into()));
        }
        if !self.svm_tol.is_finite() || self.svm_tol < 0.0 {
            return Err(fail("svm_tol must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// Wire structs fix the exact field layout of the JSONL files.

#[derive(Serialize, Deserialize)]
struct CandidateWire {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CandidateSetWire {
    image_id: String,
    image_w: f64,
    image_h: f64,
    candidates: Vec<CandidateWire>,
}

impl From<&CandidateSet> for CandidateSetWire {
    fn from(set: &CandidateSet) -> CandidateSetWire {
        CandidateSetWire {
            image_id: set.image_id.clone(),
            image_w: set.image_w,
            image_h: set.image_h,
            candidates: set
                .candidates
                .iter()
                .map(|c| CandidateWire {
                    x: c.bbox.x,
                    y: c.bbox.y,
                    w: c.bbox.w,
                    h: c.bbox.h,
                    score: c.score,
                    features: c.features.clone(),
                })
                .collect(),
        }
    }
}

impl From<CandidateSetWire> for CandidateSet {
    fn from(wire: CandidateSetWire) -> CandidateSet {
        CandidateSet {
            image_id: wire.image_id,
            image_w: wire.image_w,
            image_h: wire.image_h,
            candidates: wire
                .candidates
                .into_iter()
                .map(|c| Candidate {
                    bbox: BoundingBox::new(c.x, c.y, c.w, c.h),
                    score: c.score,
                    features: c.features,
                })
                .collect(),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

/// Reads a JSONL file, returning `(line_number, value)` pairs.
/// Whitespace-only lines are skipped.
pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Schema {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        writer.write_all(line.as_bytes()).map_err(io_err(path))?;
        writer.write_all(b"\n").map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Reads candidate sets from a JSONL file, in file order, validating every
/// set invariant. Errors name the offending line.
pub fn read_candidate_sets(path: &Path) -> Result<Vec<CandidateSet>> {
    let mut sets = Vec::new();
    for (line, wire) in read_jsonl::<CandidateSetWire>(path)? {
        let set = CandidateSet::from(wire);
        set.validate().map_err(|e| match e {
            Error::Schema { context, message } => Error::Schema {
                context: format!("{}:{line} ({context})", path.display()),
                message,
            },
            other => other,
        })?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn write_candidate_sets(sets: &[CandidateSet], path: &Path) -> Result<()> {
    let wires: Vec<CandidateSetWire> = sets.iter().map(CandidateSetWire::from).collect();
    write_jsonl(&wires, path)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
    for (line, gt) in read_jsonl::<GroundTruth>(path)? {
        let gt: GroundTruth = gt;
        gt.validate().map_err(|e| match e {
            Error::Schema { context, message } => Error::Schema {
                context: format!("{}:{line} ({context})", path.display()),
                message,
            },
            other => other,
        })?;
        out.push(gt);
    }
    Ok(out)
}

pub fn write_ground_truth(gts: &[GroundTruth], path: &Path) -> Result<()> {
    write_jsonl(gts, path)
}
