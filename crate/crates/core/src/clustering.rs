//! Spectral clustering of co-trading networks, k-means with k-means++
//! seeding, the adjusted Rand index, and day-level analytics built on them
//! (ARI series, pairwise-day ARI heatmaps, regime detection).
//!
//! Spectral clustering follows the normalized-Laplacian recipe: degrees
//! `D_ii = Σ_{j≠i} A_ij`, `L_sym = D^{-1/2} (D − A) D^{-1/2}`, the
//! eigenvectors of the `K` smallest eigenvalues stacked as columns, rows
//! scaled to unit norm, then k-means on the rows.

use std::collections::HashMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{is_symmetric, sorted_eigen, EigenOrder};
use crate::stats;

/// Assignment of `N` items to clusters `0..k`. Empty clusters are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: Option<u64>,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(invalid(format!("cluster id {bad} outside 0..{k}")));
        }
        Ok(Partition {
            assignments,
            k,
            seed: None,
        })
    }

    /// Builds a partition from arbitrary labels, numbering clusters in order
    /// of first appearance.
    pub fn from_labels<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> Self {
        let mut ids: HashMap<T, usize> = HashMap::new();
        let assignments = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Partition {
            assignments,
            k: ids.len(),
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self) -> usize {
        self.cluster_sizes().iter().filter(|&&s| s == 0).count()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.cluster_sizes().into_iter().max().unwrap_or(0)
    }
}

pub const DEFAULT_KMEANS_MAX_ITER: usize = 300;
pub const DEFAULT_KMEANS_TOL: f64 = 1e-9;
/// Floor applied to vertex degrees before taking `D^{-1/2}`.
pub const DEGREE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    /// Centroids as rows.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(points: &DMatrix<f64>, row: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let mut s = 0.0;
    for d in 0..points.ncols() {
        let diff = points[(row, d)] - centroids[(c, d)];
        s += diff * diff;
    }
    s
}

/// k-means++ seeding: first centre uniform, then `D²`-weighted sampling.
fn kmeans_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut closest: Vec<f64> = (0..n).map(|r| sq_dist(points, r, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (r, &d) in closest.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(r);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(chosen));
        for (r, slot) in closest.iter_mut().enumerate() {
            let d = sq_dist(points, r, &centroids, c);
            if d < *slot {
                *slot = d;
            }
        }
    }
    centroids
}

fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (r, slot) in out.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = sq_dist(points, r, centroids, 0);
        for c in 1..centroids.nrows() {
            let d = sq_dist(points, r, centroids, c);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *slot = best;
        inertia += best_d;
    }
    inertia
}

/// Lloyd's algorithm from k-means++ seeds on the rows of `points`.
///
/// Nearest-centroid ties go to the lowest centroid index; an empty cluster
/// keeps its previous centroid. Stops when no centroid moves by `tol` or
/// more, or after `max_iter` rounds.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(invalid(format!("k-means needs 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(invalid("k-means input has non-finite entries"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let dim = points.ncols();
    let mut inertia = assign(points, &centroids, &mut labels);
    history.push(inertia);
    while iterations < max_iter {
        iterations += 1;
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (r, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for d in 0..dim {
                sums[(c, d)] += points[(r, d)];
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut moved = 0.0;
            for d in 0..dim {
                let updated = sums[(c, d)] / counts[c] as f64;
                let diff = updated - centroids[(c, d)];
                moved += diff * diff;
                centroids[(c, d)] = updated;
            }
            shift = shift.max(moved.sqrt());
        }
        inertia = assign(points, &centroids, &mut labels);
        history.push(inertia);
        if shift < tol {
            break;
        }
    }
    Ok(KMeansFit {
        partition: Partition {
            assignments: labels,
            k,
            seed: Some(seed),
        },
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}

fn check_affinity(matrix: &DMatrix<f64>) -> Result<()> {
    if !matrix.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square affinity matrix".into(),
            found: format!("{:?}", matrix.shape()),
        });
    }
    if matrix.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(invalid("affinity matrix must be finite and non-negative"));
    }
    if !is_symmetric(matrix, 1e-10) {
        return Err(invalid("affinity matrix must be symmetric"));
    }
    Ok(())
}

/// Row-normalized spectral embedding: eigenvectors of the `k` smallest
/// eigenvalues of `L_sym` as columns, each row scaled to unit norm (zero
/// rows stay zero). Diagonal entries of the affinity are ignored.
pub fn spectral_embedding(matrix: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    check_affinity(matrix)?;
    let n = matrix.nrows();
    if k < 1 || k > n {
        return Err(invalid(format!("need 1 ≤ K ≤ N, got K={k}, N={n}")));
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = (0..n).filter(|&j| j != i).map(|j| matrix[(i, j)]).sum();
            1.0 / deg.max(DEGREE_FLOOR).sqrt()
        })
        .collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            -matrix[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j]
        }
    });
    let eig = sorted_eigen(&laplacian, EigenOrder::Ascending)?;
    let mut q = eig.vectors.columns(0, k).into_owned();
    for mut row in q.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(q)
}

/// Spectral clustering into `k` clusters; deterministic given the seed.
pub fn spectral_clustering(matrix: &DMatrix<f64>, k: usize, seed: u64) -> Result<Partition> {
    let n = matrix.nrows();
    if k < 2 || k > n {
        return Err(invalid(format!(
            "spectral clustering needs 2 ≤ K ≤ N, got K={k}, N={n}"
        )));
    }
    let embedding = spectral_embedding(matrix, k)?;
    let fit = kmeans(&embedding, k, seed, DEFAULT_KMEANS_MAX_ITER, DEFAULT_KMEANS_TOL)?;
    Ok(fit.partition)
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index between two labelings of the same
/// items. Returns 1 when both labelings are trivially identical in
/// structure (the chance-corrected ratio is 0/0).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", a.len()),
            found: b.len().to_string(),
        });
    }
    if a.is_empty() {
        return Err(invalid("ARI of empty partitions is undefined"));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c as f64)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c as f64)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c as f64)).sum();
    let total = choose2(a.len() as f64);
    let expected = if total > 0.0 { sum_rows * sum_cols / total } else { 0.0 };
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

pub fn partition_ari(a: &Partition, b: &Partition) -> Result<f64> {
    adjusted_rand_index(&a.assignments, &b.assignments)
}

/// Symmetric matrix of ARIs between every pair of partitions; diagonal 1.
pub fn pairwise_ari_heatmap(partitions: &[Partition]) -> Result<DMatrix<f64>> {
    let t = partitions.len();
    if let Some(first) = partitions.first() {
        if let Some(bad) = partitions.iter().find(|p| p.len() != first.len()) {
            return Err(Error::ShapeMismatch {
                expected: format!("partitions of {} items", first.len()),
                found: bad.len().to_string(),
            });
        }
    }
    let mut heat = DMatrix::identity(t, t);
    for s in 0..t {
        for u in (s + 1)..t {
            let v = partition_ari(&partitions[s], &partitions[u])?;
            heat[(s, u)] = v;
            heat[(u, s)] = v;
        }
    }
    Ok(heat)
}

/// Groups days into regimes by spectral clustering of an ARI heatmap, with
/// negative ARIs clamped to 0 first.
pub fn detect_regimes(heatmap: &DMatrix<f64>, n_regimes: usize, seed: u64) -> Result<Partition> {
    if n_regimes < 2 {
        return Err(invalid(format!("need at least 2 regimes, got {n_regimes}")));
    }
    let clamped = heatmap.map(|x| x.max(0.0));
    spectral_clustering(&clamped, n_regimes, seed)
}

/// Daily ARI against a fixed reference partition.
#[derive(Debug, Clone, PartialEq)]
pub struct AriSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl AriSeries {
    pub fn against_reference(dates: Vec<NaiveDate>, partitions: &[Partition], reference: &Partition) -> Result<Self> {
        if dates.len() != partitions.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} dates", partitions.len()),
                found: dates.len().to_string(),
            });
        }
        let values = partitions
            .iter()
            .map(|p| partition_ari(p, reference))
            .collect::<Result<_>>()?;
        Ok(AriSeries { dates, values })
    }
}

/// Mean, sample standard deviation and their ratio. A zero deviation gives
/// a non-finite ratio (`inf` for a positive mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AriSummary {
    pub mean: f64,
    pub stdev: f64,
    #[serde(with = "stats::flagged_f64")]
    pub snr: f64,
}

pub fn ari_summary(series: &[f64]) -> Result<AriSummary> {
    if series.is_empty() {
        return Err(invalid("ARI summary of an empty series"));
    }
    let mean = stats::mean(series);
    let stdev = stats::sample_std(series);
    Ok(AriSummary {
        mean,
        stdev,
        snr: mean / stdev,
    })
}
