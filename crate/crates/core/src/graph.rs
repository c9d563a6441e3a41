//! Edge weights, cut objectives, and the unnormalized graph Laplacian.
//!
//! Matrices are dense and row-major: per-image candidate counts stay small
//! enough that O(n^2) storage is the simple, correct choice.

use crate::error::{Error, Result};
use crate::model::{Config, WeightMode};

fn check_square(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    for row in rows {
        if row.len() != n {
            return Err(Error::Dimension {
                context: "matrix rows",
                expected: n,
                actual: row.len(),
            });
        }
    }
    Ok(n)
}

fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

fn matrix_text(n: usize, data: &[f64]) -> String {
    let mut out = String::new();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", data[i * n + j]));
        }
        out.push('\n');
    }
    out
}

/// Symmetric matrix of pairwise similarity scores in `[0, 1]` with unit
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SimilarityMatrix> {
        let n = check_square(rows)?;
        let data = flatten(rows);
        let m = SimilarityMatrix { n, data };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> SimilarityMatrix {
        debug_assert_eq!(data.len(), n * n);
        SimilarityMatrix { n, data }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Schema {
            context: "similarity matrix".into(),
            message: m,
        };
        for i in 0..self.n {
            if self.get(i, i) != 1.0 {
                return Err(bad(format!("diagonal entry ({i},{i}) is not 1")));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(bad(format!("entry ({i},{j}) = {v} outside [0, 1]")));
                }
                if v != self.get(j, i) {
                    return Err(bad(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn dump_text(&self) -> String {
        matrix_text(self.n, &self.data)
    }
}

/// Symmetric non-negative edge weights with zero diagonal; entries stay in
/// `[0, 1]` because the generating exponent is never positive.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<WeightMatrix> {
        let n = check_square(rows)?;
        let data = flatten(rows);
        let m = WeightMatrix { n, data };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Schema {
            context: "weight matrix".into(),
            message: m,
        };
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(bad(format!("diagonal entry ({i},{i}) is not 0")));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(bad(format!("entry ({i},{j}) = {v} outside [0, 1]")));
                }
                if v != self.get(j, i) {
                    return Err(bad(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn dump_text(&self) -> String {
        matrix_text(self.n, &self.data)
    }
}

/// Unnormalized graph Laplacian `L = D - W`. Symmetric, positive
/// semidefinite, row sums zero, constant vector in the null space.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    n: usize,
    data: Vec<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    /// `x^T L x`, which equals `1/2 * sum w_mn (x_m - x_n)^2`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                context: "quadratic_form",
                expected: self.n,
                actual: x.len(),
            });
        }
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * x[j];
            }
            acc += x[i] * row;
        }
        Ok(acc)
    }

    pub fn dump_text(&self) -> String {
        matrix_text(self.n, &self.data)
    }
}

/// Assignment of `n` items to `k` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    k: usize,
    assign: Vec<usize>,
}

impl Partition {
    pub fn new(k: usize, assign: Vec<usize>) -> Result<Partition> {
        if k < 1 {
            return Err(Error::Partition("k must be at least 1".into()));
        }
        let mut seen = vec![false; k];
        for (idx, &g) in assign.iter().enumerate() {
            if g >= k {
                return Err(Error::Partition(format!(
                    "item {idx} assigned to group {g}, but k = {k}"
                )));
            }
            seen[g] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("group {missing} is empty")));
        }
        Ok(Partition { k, assign })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    /// Member indices per group, ascending within each group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (idx, &g) in self.assign.iter().enumerate() {
            groups[g].push(idx);
        }
        groups
    }
}

/// Converts similarity scores to edge weights.
///
/// The default `dissimilarity` mode uses `exp(-(1 - S) / (2 delta^2))` so a
/// strong semantic resemblance yields a heavy edge; `literal` mode applies
/// `exp(-S / (2 delta^2))` unchanged. The diagonal is zero in both modes.
pub fn edge_weights(s: &SimilarityMatrix, cfg: &Config) -> WeightMatrix {
    let n = s.n();
    let denom = 2.0 * cfg.delta * cfg.delta;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let sij = s.get(i, j);
            let exponent = match cfg.weight_mode {
                WeightMode::Dissimilarity => -(1.0 - sij) / denom,
                WeightMode::Literal => -sij / denom,
            };
            data[i * n + j] = exponent.exp();
        }
    }
    WeightMatrix { n, data }
}

fn check_partition_size(w: &WeightMatrix, p: &Partition, context: &'static str) -> Result<()> {
    if p.n() != w.n() {
        return Err(Error::Dimension {
            context,
            expected: w.n(),
            actual: p.n(),
        });
    }
    Ok(())
}

/// `1/2 * sum_i W(A_i, complement(A_i))`: the total weight crossing the
/// partition.
pub fn cut_value(w: &WeightMatrix, p: &Partition) -> Result<f64> {
    check_partition_size(w, p, "cut_value")?;
    let assign = p.assign();
    let mut total = 0.0;
    for m in 0..w.n() {
        for n in 0..w.n() {
            if assign[m] != assign[n] {
                total += w.get(m, n);
            }
        }
    }
    Ok(0.5 * total)
}

/// `1/2 * sum_i W(A_i, complement(A_i)) / |A_i|`: the cut with each term
/// divided by its group size, which penalizes splitting off single vertices.
pub fn ratio_cut_value(w: &WeightMatrix, p: &Partition) -> Result<f64> {
    check_partition_size(w, p, "ratio_cut_value")?;
    let assign = p.assign();
    let mut sizes = vec![0usize; p.k()];
    for &g in assign {
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Partition(format!("group {empty} is empty")));
    }
    let mut total = 0.0;
    for g in 0..p.k() {
        let mut crossing = 0.0;
        for m in 0..w.n() {
            if assign[m] != g {
                continue;
            }
            for n in 0..w.n() {
                if assign[n] != g {
                    crossing += w.get(m, n);
                }
            }
        }
        total += crossing / sizes[g] as f64;
    }
    Ok(0.5 * total)
}

/// `L = D - W` with `D` the diagonal of row sums.
pub fn laplacian(w: &WeightMatrix) -> Laplacian {
    let n = w.n();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            degree += w.get(i, j);
            if i != j {
                data[i * n + j] = -w.get(i, j);
            }
        }
        data[i * n + i] = degree;
    }
    Laplacian { n, data }
}
