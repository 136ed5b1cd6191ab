//! Dense symmetric linear-algebra helpers shared by the clustering,
//! covariance and portfolio modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with a deterministic ordering.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    Ascending,
    Descending,
}

/// Mirrors the upper triangle so tiny floating-point asymmetries do not
/// reach the eigen-solver.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Full symmetric eigen-decomposition, sorted by eigenvalue (ties by the
/// solver's original column index). Each eigenvector's sign is fixed so that
/// its largest-magnitude component (first such index on ties) is positive.
pub fn sorted_eigen(m: &DMatrix<f64>, order: EigenOrder) -> Result<SortedEigen> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            found: format!("{:?}", m.shape()),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(SortedEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigen-solver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        let ord = match order {
            EigenOrder::Ascending => x.total_cmp(&y),
            EigenOrder::Descending => y.total_cmp(&x),
        };
        ord.then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, idx.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in idx.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let mut best = 0;
        for r in 1..n {
            if v[r].abs() > v[best].abs() {
                best = r;
            }
        }
        if v[best] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    Ok(SortedEigen { values, vectors })
}

/// Attempts a Cholesky factorization, treating any pivot below
/// `rel_tol · max(diag)` as a failure. Returns the lower factor on success.
pub fn cholesky_checked(m: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return None;
    }
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    if n > 0 && !(max_diag > 0.0) {
        return None;
    }
    let threshold = rel_tol * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return None;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Some(l)
}

/// Pivot tolerance used by positive-definiteness checks.
pub const PD_PIVOT_TOL: f64 = 1e-12;

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky_checked(m, PD_PIVOT_TOL).is_some()
}

/// `λ_max / λ_min` of a symmetric matrix; infinite when `λ_min ≤ 0`.
pub fn condition_number_from_eigenvalues(values: &DVector<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let max = values.max();
    let min = values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    let eig = sorted_eigen(m, EigenOrder::Ascending)?;
    Ok(condition_number_from_eigenvalues(&eig.values))
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}
