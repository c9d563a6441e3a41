//! Training-pair construction from score-sorted candidates.
//!
//! Per image, candidates are sorted by descending score; pairs drawn inside
//! the top decile are labeled similar (1) and pairs from top to bottom
//! decile are labeled dissimilar (0). Pairs never cross images, but samples
//! from all images are pooled into one training set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::phi_set;
use crate::model::{write_jsonl, CandidateSet, Config};

/// One labeled pair feature with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    /// Difference of the two candidate embeddings, `phi(i) - phi(j)`.
    pub feature: Vec<f64>,
    /// `true` for a similar (top/top) pair, `false` for top/bottom.
    pub label: bool,
    pub image_id: String,
    pub i: usize,
    pub j: usize,
}

/// `ceil(frac * n)` with a guard against values like `0.1 * 20` landing a
/// hair above the integer they represent.
fn ceil_count(frac: f64, n: usize) -> usize {
    let raw = frac * n as f64;
    let nearest = raw.round();
    let v = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (v as usize).min(n)
}

/// Splits candidate indices into the top and bottom score fractions.
///
/// Indices are ordered by score descending, ties broken by original index
/// ascending. The bottom is capped at `n - |top|` so the two never overlap.
pub fn split_top_bottom(set: &CandidateSet, cfg: &Config) -> (Vec<usize>, Vec<usize>) {
    let n = set.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        set.candidates[b]
            .score
            .total_cmp(&set.candidates[a].score)
            .then(a.cmp(&b))
    });
    let n_top = ceil_count(cfg.top_frac, n);
    let n_bottom = ceil_count(cfg.bottom_frac, n).min(n - n_top);
    let top = order[..n_top].to_vec();
    let bottom = order[n - n_bottom..].to_vec();
    (top, bottom)
}

/// Builds the pooled training set over all images.
///
/// Per image: one label-1 sample for each unordered pair `{i, j}` inside the
/// top split (feature oriented `i < j`), and one label-0 sample for each
/// directed `(top, bottom)` pair. Diagonal pairs are excluded; a zero
/// difference vector carries no signal. Output order is
/// `(image order, i, j)` ascending regardless of scheduling.
pub fn build_training_pairs(sets: &[CandidateSet], cfg: &Config) -> Result<Vec<PairSample>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for set in sets {
        if set.len() < 2 {
            continue;
        }
        let phis = phi_set(set);
        let (top, bottom) = split_top_bottom(set, cfg);

        let mut pairs: Vec<(usize, usize, bool)> = Vec::new();
        for a in 0..top.len() {
            for b in (a + 1)..top.len() {
                let (i, j) = if top[a] < top[b] {
                    (top[a], top[b])
                } else {
                    (top[b], top[a])
                };
                pairs.push((i, j, true));
            }
        }
        for &i in &top {
            for &j in &bottom {
                pairs.push((i, j, false));
            }
        }
        pairs.sort_by_key(|&(i, j, _)| (i, j));

        for (i, j, label) in pairs {
            let feature = crate::metric::pair_feature(&phis[i], &phis[j])?;
            out.push(PairSample {
                feature,
                label,
                image_id: set.image_id.clone(),
                i,
                j,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Training(
            "no training pairs could be built from the corpus".into(),
        ));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PairWire {
    feature: Vec<f64>,
    label: u8,
    image_id: String,
    i: usize,
    j: usize,
}

/// Dumps pair samples as JSONL for offline inspection.
pub fn write_pair_samples(samples: &[PairSample], path: &Path) -> Result<()> {
    let wires: Vec<PairWire> = samples
        .iter()
        .map(|s| PairWire {
            feature: s.feature.clone(),
            label: u8::from(s.label),
            image_id: s.image_id.clone(),
            i: s.i,
            j: s.j,
        })
        .collect();
    write_jsonl(&wires, path)
}
