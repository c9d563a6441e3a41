//! Detection refinement for crowded scenes: learn a pairwise semantic
//! similarity over candidate detections, partition each image's candidates
//! with ratio-cut spectral clustering, and reclassify whole groups by voting
//! so that low-score true positives are recovered and high-score false
//! positives are suppressed.
//!
//! Pipeline stages, one module each:
//!
//! 1. [`model`] – domain types, configuration, and the JSONL data formats.
//! 2. [`metric`] – candidate embedding and the learned linear-SVM similarity.
//! 3. [`pairs`] – labeled training pairs from the score deciles.
//! 4. [`graph`] – edge weights, cut objectives, and the graph Laplacian.
//! 5. [`spectral`] – Jacobi eigendecomposition, eigengap selection, k-means.
//! 6. [`refine`] – the per-image refinement pipeline and group voting.
//! 7. [`eval`] – IoU matching, precision–recall curves, average precision.
//! 8. [`synthgen`] – seeded synthetic corpora with planted face clusters.
//!
//! Everything is deterministic given the configured seed: no wall-clock or
//! OS entropy is consulted anywhere.

// Dense symmetric-matrix kernels read best with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod metric;
pub mod model;
pub mod pairs;
pub mod refine;
mod seed;
pub mod spectral;
pub mod synthgen;

pub use error::{Error, Result};
