//! Network regression of one matrix on others with permutation inference.
//!
//! Matrices are regressed on their vectorized upper-triangle entries by
//! ordinary least squares through the origin. Significance comes from the
//! quadratic assignment procedure (QAP): rows and columns of the explanatory
//! matrix are permuted jointly, which keeps its network structure while
//! breaking its alignment with the response. With several regressors,
//! MRQAP with double semi-partialing permutes the residual of the tested
//! regressor after regressing it on the others.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::cholesky_checked;
use crate::stats;

/// Default number of permutations.
pub const DEFAULT_PERMUTATIONS: usize = 2000;
/// Significance level used by summaries.
pub const ALPHA: f64 = 0.05;

/// Binary same-group indicator with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMatrix(DMatrix<f64>);

impl SectorMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn sector_indicator<T: PartialEq>(labels: &[T]) -> SectorMatrix {
    let n = labels.len();
    SectorMatrix(DMatrix::from_fn(n, n, |i, j| {
        if i != j && labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    }))
}

/// Upper-triangle entries `(i < j)` in row-major order.
pub fn vectorize_offdiag(matrix: &DMatrix<f64>) -> DVector<f64> {
    let n = matrix.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(matrix[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vectorize_offdiag`]: a symmetric matrix with zero diagonal.
pub fn fill_offdiag(values: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    if values.len() != n * n.saturating_sub(1) / 2 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} off-diagonal values", n * n.saturating_sub(1) / 2),
            found: values.len().to_string(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = values[k];
            m[(j, i)] = values[k];
            k += 1;
        }
    }
    Ok(m)
}

fn permuted_offdiag(matrix: &DMatrix<f64>, perm: &[usize]) -> DVector<f64> {
    let n = matrix.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(matrix[(perm[i], perm[j])]);
        }
    }
    DVector::from_vec(out)
}

/// Which permutation outcomes count against the observed coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `γ_perm ≥ γ_obs`.
    #[default]
    Upper,
    /// `|γ_perm| ≥ |γ_obs|`.
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegressionOptions {
    pub intercept: bool,
    pub tail: Tail,
}

/// Least-squares coefficients for the given design columns. With an
/// intercept, its estimate is returned last.
fn least_squares(y: &DVector<f64>, columns: &[DVector<f64>], intercept: bool) -> Result<Vec<f64>> {
    let e = y.len();
    let mut design: Vec<&DVector<f64>> = columns.iter().collect();
    let ones;
    if intercept {
        ones = DVector::from_element(e, 1.0);
        design.push(&ones);
    }
    let p = design.len();
    if p == 0 || e < p {
        return Err(Error::RankDeficient);
    }
    let norms: Vec<f64> = design.iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for a in 0..p {
        rhs[a] = design[a].dot(y) / norms[a];
        for b in a..p {
            let g = design[a].dot(design[b]) / (norms[a] * norms[b]);
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
    }
    let l = cholesky_checked(&gram, 1e-10).ok_or(Error::RankDeficient)?;
    let scaled = crate::linalg::cholesky_solve(&l, &rhs);
    Ok((0..p).map(|a| scaled[a] / norms[a]).collect())
}

/// Fitted coefficients of `y` on `xs` (off-diagonal entries only).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFit {
    pub coefficients: Vec<f64>,
    pub intercept: Option<f64>,
}

fn check_shapes(y: &DMatrix<f64>, xs: &[&DMatrix<f64>]) -> Result<()> {
    if !y.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square response matrix".into(),
            found: format!("{:?}", y.shape()),
        });
    }
    for x in xs {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", y.shape()),
                found: format!("{:?}", x.shape()),
            });
        }
    }
    Ok(())
}

pub fn fit_networks(y: &DMatrix<f64>, xs: &[&DMatrix<f64>], intercept: bool) -> Result<NetworkFit> {
    check_shapes(y, xs)?;
    let yv = vectorize_offdiag(y);
    let columns: Vec<DVector<f64>> = xs.iter().map(|x| vectorize_offdiag(x)).collect();
    let mut coefficients = least_squares(&yv, &columns, intercept)?;
    let intercept = intercept.then(|| coefficients.pop().expect("intercept estimate"));
    Ok(NetworkFit {
        coefficients,
        intercept,
    })
}

/// Supplies the permutation used by each replicate.
pub trait PermutationSource: Sync {
    fn permutation(&self, replicate: usize, n: usize) -> Vec<usize>;
}

/// Uniform random permutations; replicate `r` draws from ChaCha stream `r`
/// of the master seed, so results do not depend on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct SeededPermutations {
    pub seed: u64,
}

impl PermutationSource for SeededPermutations {
    fn permutation(&self, replicate: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm
    }
}

/// Always the identity; useful for checking the p-value bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct IdentityPermutations;

impl PermutationSource for IdentityPermutations {
    fn permutation(&self, _replicate: usize, n: usize) -> Vec<usize> {
        (0..n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub gamma: f64,
    pub p_value: f64,
}

/// Outcome of a daily network regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub date: Option<NaiveDate>,
    pub gamma_c: f64,
    pub p_value_c: f64,
    /// Control regressors (e.g. the sector network), in input order.
    pub controls: Vec<Coefficient>,
    pub n_permutations: usize,
    pub seed: Option<u64>,
}

impl RegressionResult {
    pub fn gamma_s(&self) -> Option<f64> {
        self.controls.first().map(|c| c.gamma)
    }

    pub fn p_value_s(&self) -> Option<f64> {
        self.controls.first().map(|c| c.p_value)
    }
}

fn exceeds(tail: Tail, permuted: f64, observed: f64) -> bool {
    match tail {
        Tail::Upper => permuted >= observed,
        Tail::TwoSided => permuted.abs() >= observed.abs(),
    }
}

fn p_value(hits: usize, n_perm: usize) -> f64 {
    (1 + hits) as f64 / (1 + n_perm) as f64
}

/// Simple QAP regression of `y` on `x` with seeded permutations.
pub fn qap_test(y: &DMatrix<f64>, x: &DMatrix<f64>, n_perm: usize, seed: u64) -> Result<RegressionResult> {
    let mut result = qap_test_with(y, x, n_perm, &SeededPermutations { seed }, RegressionOptions::default())?;
    result.seed = Some(seed);
    Ok(result)
}

pub fn qap_test_with(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    n_perm: usize,
    source: &dyn PermutationSource,
    options: RegressionOptions,
) -> Result<RegressionResult> {
    if n_perm == 0 {
        return Err(invalid("QAP needs at least one permutation"));
    }
    check_shapes(y, &[x])?;
    let yv = vectorize_offdiag(y);
    let xv = vectorize_offdiag(x);
    let observed = least_squares(&yv, std::slice::from_ref(&xv), options.intercept)?[0];
    let n = x.nrows();
    let hits: usize = (0..n_perm)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let perm = source.permutation(r, n);
            let xp = permuted_offdiag(x, &perm);
            let gamma = least_squares(&yv, &[xp], options.intercept)?[0];
            Ok(usize::from(exceeds(options.tail, gamma, observed)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(RegressionResult {
        date: None,
        gamma_c: observed,
        p_value_c: p_value(hits, n_perm),
        controls: Vec::new(),
        n_permutations: n_perm,
        seed: None,
    })
}

/// MRQAP with double semi-partialing; `x_primary` is reported as `γ_C`,
/// `x_controls` as `controls`.
pub fn mrqap_dsp_test(
    y: &DMatrix<f64>,
    x_primary: &DMatrix<f64>,
    x_controls: &[&DMatrix<f64>],
    n_perm: usize,
    seed: u64,
) -> Result<RegressionResult> {
    let mut result = mrqap_dsp_test_with(
        y,
        x_primary,
        x_controls,
        n_perm,
        &SeededPermutations { seed },
        RegressionOptions::default(),
    )?;
    result.seed = Some(seed);
    Ok(result)
}

pub fn mrqap_dsp_test_with(
    y: &DMatrix<f64>,
    x_primary: &DMatrix<f64>,
    x_controls: &[&DMatrix<f64>],
    n_perm: usize,
    source: &dyn PermutationSource,
    options: RegressionOptions,
) -> Result<RegressionResult> {
    if n_perm == 0 {
        return Err(invalid("MRQAP needs at least one permutation"));
    }
    let mut xs: Vec<&DMatrix<f64>> = vec![x_primary];
    xs.extend_from_slice(x_controls);
    check_shapes(y, &xs)?;
    let n = y.nrows();
    let yv = vectorize_offdiag(y);
    let columns: Vec<DVector<f64>> = xs.iter().map(|x| vectorize_offdiag(x)).collect();
    let observed = least_squares(&yv, &columns, options.intercept)?;

    let mut tested = Vec::with_capacity(columns.len());
    for k in 0..columns.len() {
        let others: Vec<DVector<f64>> = columns
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != k)
            .map(|(_, v)| v.clone())
            .collect();
        let residual = if others.is_empty() && !options.intercept {
            columns[k].clone()
        } else {
            let beta = least_squares(&columns[k], &others, options.intercept)?;
            let mut fitted = DVector::zeros(yv.len());
            for (b, col) in beta.iter().zip(&others) {
                fitted += col * *b;
            }
            if options.intercept {
                fitted.add_scalar_mut(*beta.last().expect("intercept"));
            }
            &columns[k] - fitted
        };
        let residual_matrix = fill_offdiag(&residual, n)?;
        let hits: usize = (0..n_perm)
            .into_par_iter()
            .map(|r| -> Result<usize> {
                let perm = source.permutation(r, n);
                let mut design = columns.clone();
                design[k] = permuted_offdiag(&residual_matrix, &perm);
                let gamma = least_squares(&yv, &design, options.intercept)?[k];
                Ok(usize::from(exceeds(options.tail, gamma, observed[k])))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        tested.push(Coefficient {
            gamma: observed[k],
            p_value: p_value(hits, n_perm),
        });
    }
    let primary = tested.remove(0);
    Ok(RegressionResult {
        date: None,
        gamma_c: primary.gamma,
        p_value_c: primary.p_value,
        controls: tested,
        n_permutations: n_perm,
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub mean: f64,
    pub median: f64,
    pub stdev: f64,
    /// Percentage of days with a positive coefficient, 0–100.
    pub pct_positive: f64,
    /// Percentage of days with `p ≤ α`, 0–100.
    pub pct_significant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub days: usize,
    pub alpha: f64,
    pub gamma_c: CoefficientSummary,
    pub gamma_s: Option<CoefficientSummary>,
}

fn summarize(pairs: &[(f64, f64)], alpha: f64) -> CoefficientSummary {
    let gammas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n = pairs.len() as f64;
    CoefficientSummary {
        mean: stats::mean(&gammas),
        median: stats::median(&gammas),
        stdev: stats::sample_std(&gammas),
        pct_positive: 100.0 * pairs.iter().filter(|p| p.0 > 0.0).count() as f64 / n,
        pct_significant: 100.0 * pairs.iter().filter(|p| p.1 <= alpha).count() as f64 / n,
    }
}

pub fn daily_regression_summary(results: &[RegressionResult]) -> Result<RegressionSummary> {
    if results.is_empty() {
        return Err(invalid("no regression results to summarize"));
    }
    let c: Vec<(f64, f64)> = results.iter().map(|r| (r.gamma_c, r.p_value_c)).collect();
    let s: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|r| r.controls.first().map(|c| (c.gamma, c.p_value)))
        .collect();
    Ok(RegressionSummary {
        days: results.len(),
        alpha: ALPHA,
        gamma_c: summarize(&c, ALPHA),
        gamma_s: (!s.is_empty()).then(|| summarize(&s, ALPHA)),
    })
}
