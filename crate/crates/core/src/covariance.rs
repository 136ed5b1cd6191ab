//! Realized covariance from gridded mid-price log returns, the
//! factor/idiosyncratic eigen-split, and the cluster-block estimator
//!
//! ```text
//! Σ̂_cluster = Σ_{k≤K} λ_k v_k v_kᵀ + Γ̂_u,   Γ̂_u[i,j] = Σ̂_u[i,j] · 1{cluster(i) = cluster(j)}
//! ```
//!
//! The estimator is positive definite whenever every cluster is smaller
//! than the rank of the realized covariance (the number of intervals `m`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::error::{invalid, Error, Result};
use crate::linalg::{condition_number_from_eigenvalues, is_positive_definite, sorted_eigen, EigenOrder};
use crate::trade_model::SessionBounds;

/// `N × m` log returns on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    /// Left endpoints of the `m` intervals, nanoseconds since midnight.
    pub grid: Vec<i64>,
    pub returns: DMatrix<f64>,
    /// Symbols whose first quote came after a grid point and was carried
    /// backwards.
    pub backfilled: Vec<usize>,
}

impl ReturnPanel {
    pub fn new(grid: Vec<i64>, returns: DMatrix<f64>) -> Result<Self> {
        if grid.len() != returns.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} grid points", returns.ncols()),
                found: grid.len().to_string(),
            });
        }
        if returns.iter().any(|x| !x.is_finite()) {
            return Err(invalid("return panel has non-finite entries"));
        }
        Ok(ReturnPanel {
            grid,
            returns,
            backfilled: Vec::new(),
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_intervals(&self) -> usize {
        self.returns.ncols()
    }

    /// Per-symbol sum of intraday log returns.
    pub fn total_returns(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_symbols(), self.returns.row_iter().map(|r| r.sum()))
    }
}

/// What to do when a symbol has no quote at or before a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapPolicy {
    /// Use the first available quote and record the symbol in
    /// [`ReturnPanel::backfilled`].
    #[default]
    Backfill,
    Strict,
}

/// Samples each mid-price series at `open, open + Δ, …, close` (last quote
/// at or before each point) and differences the logs. Series must be sorted
/// by timestamp; `(close − open)` must be a multiple of `Δ`.
pub fn grid_log_returns(
    series: &[Vec<(i64, f64)>],
    bounds: SessionBounds,
    delta_ns: i64,
    policy: SnapPolicy,
) -> Result<ReturnPanel> {
    if delta_ns <= 0 {
        return Err(invalid(format!("sampling interval must be positive, got {delta_ns}")));
    }
    let length = bounds.length_ns();
    if length % delta_ns != 0 {
        return Err(invalid(format!(
            "session length {length} ns is not a multiple of the sampling interval {delta_ns} ns"
        )));
    }
    let m = (length / delta_ns) as usize;
    let points: Vec<i64> = (0..=m as i64).map(|k| bounds.open_ns() + k * delta_ns).collect();
    let mut returns = DMatrix::zeros(series.len(), m);
    let mut backfilled = Vec::new();
    for (symbol, quotes) in series.iter().enumerate() {
        if quotes.is_empty() {
            return Err(invalid(format!("symbol {symbol} has no quotes")));
        }
        if let Some(&(t, p)) = quotes.iter().find(|&&(_, p)| !(p > 0.0) || !p.is_finite()) {
            return Err(invalid(format!(
                "symbol {symbol} has non-positive mid price {p} at {t}"
            )));
        }
        if quotes.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(invalid(format!("quotes of symbol {symbol} are not sorted")));
        }
        let mut cursor = 0usize;
        let mut log_prices = Vec::with_capacity(points.len());
        let mut used_backfill = false;
        for &g in &points {
            while cursor < quotes.len() && quotes[cursor].0 <= g {
                cursor += 1;
            }
            let price = if cursor == 0 {
                match policy {
                    SnapPolicy::Strict => {
                        return Err(invalid(format!("symbol {symbol} has no quote at or before {g}")))
                    }
                    SnapPolicy::Backfill => {
                        used_backfill = true;
                        quotes[0].1
                    }
                }
            } else {
                quotes[cursor - 1].1
            };
            log_prices.push(price.ln());
        }
        if used_backfill {
            backfilled.push(symbol);
        }
        for k in 0..m {
            returns[(symbol, k)] = log_prices[k + 1] - log_prices[k];
        }
    }
    Ok(ReturnPanel {
        grid: points[..m].to_vec(),
        returns,
        backfilled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Realized,
    FactorBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: CovarianceKind,
    pub factors: Option<usize>,
    /// `λ_max / λ_min`, infinite for singular matrices.
    pub condition_number: f64,
    pub positive_definite: bool,
}

impl CovarianceEstimate {
    pub fn from_matrix(matrix: DMatrix<f64>, kind: CovarianceKind, factors: Option<usize>) -> Result<Self> {
        let eig = sorted_eigen(&matrix, EigenOrder::Ascending)?;
        let positive_definite = is_positive_definite(&matrix);
        Ok(CovarianceEstimate {
            condition_number: condition_number_from_eigenvalues(&eig.values),
            positive_definite,
            matrix,
            kind,
            factors,
        })
    }
}

/// Uncentered realized covariance `Σ_τ r_τ r_τᵀ`.
pub fn realized_covariance(panel: &ReturnPanel) -> Result<CovarianceEstimate> {
    let r = &panel.returns;
    let sigma = r * r.transpose();
    CovarianceEstimate::from_matrix(sigma, CovarianceKind::Realized, None)
}

#[derive(Debug, Clone)]
pub struct FactorSplit {
    /// `Σ_{k≤K} λ_k v_k v_kᵀ`.
    pub factor_part: DMatrix<f64>,
    /// `Σ − factor_part`.
    pub idio_part: DMatrix<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Splits a symmetric matrix into its top-`k` eigen-component and the rest.
pub fn factor_split(sigma: &DMatrix<f64>, k: usize) -> Result<FactorSplit> {
    let n = sigma.nrows();
    if !sigma.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            found: format!("{:?}", sigma.shape()),
        });
    }
    if k < 1 || k >= n {
        return Err(invalid(format!("need 1 ≤ K < N, got K={k}, N={n}")));
    }
    let eig = sorted_eigen(sigma, EigenOrder::Descending)?;
    let mut factor_part = DMatrix::zeros(n, n);
    for c in 0..k {
        let v = eig.vectors.column(c);
        factor_part += v * v.transpose() * eig.values[c];
    }
    let idio_part = sigma - &factor_part;
    Ok(FactorSplit {
        factor_part,
        idio_part,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    })
}

/// Zeroes entries linking symbols in different clusters.
pub fn block_threshold(idio: &DMatrix<f64>, partition: &Partition) -> Result<DMatrix<f64>> {
    let n = idio.nrows();
    if partition.len() != n || !idio.is_square() {
        return Err(Error::ShapeMismatch {
            expected: format!("partition of {n} symbols"),
            found: partition.len().to_string(),
        });
    }
    let a = &partition.assignments;
    Ok(DMatrix::from_fn(
        n,
        n,
        |i, j| {
            if a[i] == a[j] {
                idio[(i, j)]
            } else {
                0.0
            }
        },
    ))
}

/// Cluster-block estimator applied to an existing covariance matrix.
pub fn cluster_block_estimate(sigma: &DMatrix<f64>, k: usize, partition: &Partition) -> Result<CovarianceEstimate> {
    let split = factor_split(sigma, k)?;
    let gamma = block_threshold(&split.idio_part, partition)?;
    let estimate = split.factor_part + gamma;
    CovarianceEstimate::from_matrix(
        crate::linalg::symmetrize(&estimate),
        CovarianceKind::FactorBlock,
        Some(k),
    )
}

/// Realized covariance → factor split → block threshold → sum.
pub fn estimate_cluster_covariance(panel: &ReturnPanel, k: usize, partition: &Partition) -> Result<CovarianceEstimate> {
    if partition.max_cluster_size() >= panel.n_intervals() {
        log::warn!(
            "largest cluster has {} symbols but only {} intervals: estimate may be singular",
            partition.max_cluster_size(),
            panel.n_intervals()
        );
    }
    let realized = realized_covariance(panel)?;
    cluster_block_estimate(&realized.matrix, k, partition)
}
