//! The ratio-cut relaxation: eigenvectors of the Laplacian, eigengap model
//! selection, and seeded k-means on the spectral embedding.
//!
//! The eigensolver is a cyclic Jacobi sweep. It is slower than QR for large
//! matrices but absolutely robust for the symmetric case, and — together
//! with eigenvector sign canonicalization — bit-reproducible across runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Laplacian, Partition};
use crate::model::Config;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues ascending with matching eigenvectors (`eigenvectors[j]` is
/// the unit eigenvector for `eigenvalues[j]`).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Spectral embedding: row `i` holds the components of candidate `i` in the
/// first `k` eigenvectors.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub n: usize,
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    /// The `k` smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

fn frobenius(data: &[f64]) -> f64 {
    data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal_norm(n: usize, a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// `1e-12 * ||A||_F`. Eigenvalues are returned ascending, and each
/// eigenvector has its first non-negligible component made positive so the
/// decomposition is reproducible.
pub fn eigh(n: usize, data: &[f64]) -> Result<EigenDecomposition> {
    if data.len() != n * n {
        return Err(Error::Dimension {
            context: "eigh",
            expected: n * n,
            actual: data.len(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigh input has non-finite entries".into()));
    }
    let scale = frobenius(data);
    for i in 0..n {
        for j in (i + 1)..n {
            if (data[i * n + j] - data[j * n + i]).abs() > 1e-9 * (1.0 + scale) {
                return Err(Error::Numeric(format!(
                    "eigh input is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    // Work on a symmetrized copy; accumulate rotations in v (columns).
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = data[i * n + i];
        for j in (i + 1)..n {
            let m = 0.5 * (data[i * n + j] + data[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let stop = 1e-12 * scale;
    let mut converged = scale == 0.0 || n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged || off_diagonal_norm(n, &a) <= stop {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e100 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let app = a[p * n + p];
                let aqq = a[q * n + q];
                a[p * n + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q * n + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[p * n + r] = a[r * n + p];
                    a[r * n + q] = s * arp + c * arq;
                    a[q * n + r] = a[r * n + q];
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(n, &a) > stop {
        return Err(Error::Numeric(format!(
            "Jacobi sweep did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]).then(x.cmp(&y)));

    let eigenvalues: Vec<f64> = order.iter().map(|&j| a[j * n + j]).collect();
    let mut eigenvectors = Vec::with_capacity(n);
    for &j in &order {
        let mut col: Vec<f64> = (0..n).map(|r| v[r * n + j]).collect();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in &mut col {
                    *x = -*x;
                }
            }
        }
        eigenvectors.push(col);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

impl Laplacian {
    pub fn eigh(&self) -> Result<EigenDecomposition> {
        eigh(self.n(), self.data())
    }
}

fn embedding_from(dec: &EigenDecomposition, n: usize, k: usize) -> Embedding {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|j| dec.eigenvectors[j][i]).collect())
        .collect();
    Embedding {
        n,
        k,
        rows,
        eigenvalues: dec.eigenvalues[..k].to_vec(),
    }
}

/// Rows of the first `k` eigenvectors of `L`, ascending by eigenvalue.
pub fn embed(l: &Laplacian, k: usize) -> Result<Embedding> {
    let n = l.n();
    if k < 1 || k > n {
        return Err(Error::Parameter(format!(
            "embedding dimension k = {k} outside [1, {n}]"
        )));
    }
    let dec = l.eigh()?;
    Ok(embedding_from(&dec, n, k))
}

/// Eigengap heuristic: the index of the largest gap in the ascending
/// spectrum, searched below `k_max`; ties resolve toward smaller k.
pub fn choose_k(eigenvalues: &[f64], k_max: usize) -> usize {
    let m = k_max.min(eigenvalues.len());
    if m < 2 {
        return 1;
    }
    let mut best_k = 1;
    let mut best_gap = eigenvalues[1] - eigenvalues[0];
    for i in 2..m {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = i;
        }
    }
    best_k
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// Lloyd iterations from a k-means++ initialization.
///
/// Deterministic given `seed`: ties in assignment go to the lowest centroid
/// index, and an emptied cluster is reseeded with the point farthest from
/// its assigned centroid. Stops when assignments repeat or after 100
/// iterations; the returned partition has no empty group.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<Partition> {
    let n = rows.len();
    if k < 1 || n < k {
        return Err(Error::Parameter(format!(
            "kmeans needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Dimension {
            context: "kmeans",
            expected: dim,
            actual: rows.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target: f64 = rng.random_range(0.0..total);
            let mut cum = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if cum > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(rows[pick].clone());
        let newest = centroids.last().unwrap();
        for (i, r) in rows.iter().enumerate() {
            let d = sq_dist(r, newest);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut assign: Option<Vec<usize>> = None;
    for _ in 0..100 {
        let mut next: Vec<usize> = rows
            .iter()
            .map(|r| nearest_centroid(r, &centroids).0)
            .collect();

        // Reseed empty clusters with the worst-fit point, one at a time.
        loop {
            let mut counts = vec![0usize; k];
            for &g in &next {
                counts[g] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far_idx = None;
            let mut far_d = -1.0;
            for (i, r) in rows.iter().enumerate() {
                if counts[next[i]] <= 1 {
                    continue;
                }
                let d = sq_dist(r, &centroids[next[i]]);
                if d > far_d {
                    far_d = d;
                    far_idx = Some(i);
                }
            }
            let idx = far_idx.expect("some cluster must have two members");
            next[idx] = empty;
            centroids[empty] = rows[idx].clone();
        }

        let done = assign.as_ref() == Some(&next);
        assign = Some(next);
        if done {
            break;
        }

        let current = assign.as_ref().unwrap();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &g) in rows.iter().zip(current) {
            counts[g] += 1;
            for (s, x) in sums[g].iter_mut().zip(r) {
                *s += x;
            }
        }
        for g in 0..k {
            for s in &mut sums[g] {
                *s /= counts[g] as f64;
            }
        }
        centroids = sums;
    }

    Partition::new(k, assign.expect("at least one iteration"))
}

/// Clusters the Laplacian's candidates: eigengap choice of k, spectral
/// embedding, then k-means seeded from the configuration.
pub fn spectral_cluster(l: &Laplacian, cfg: &Config) -> Result<Partition> {
    cfg.validate()?;
    let n = l.n();
    if n == 0 {
        return Err(Error::Parameter("spectral_cluster needs n >= 1".into()));
    }
    if n == 1 {
        return Partition::new(1, vec![0]);
    }
    let dec = l.eigh()?;
    let k = choose_k(&dec.eigenvalues, cfg.k_max);
    let embedding = embedding_from(&dec, n, k);
    kmeans(&embedding.rows, k, cfg.rng_seed)
}
