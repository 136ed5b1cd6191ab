//! Minimum-variance portfolios under a gross-leverage bound and a daily
//! open-to-close backtest.
//!
//! ```text
//! min wᵀΣw   s.t.  1ᵀw = 1,  ‖w‖₁ ≤ l
//! ```
//!
//! When the unconstrained minimizer (the GMV portfolio) already satisfies
//! the bound it is returned directly. Otherwise the problem is solved by
//! ADMM on the split `w = z`, with `z` projected onto the ℓ₁ ball, and each
//! chunk of iterations is followed by an exact solve on the support and
//! signs of `z`. A solution is accepted only when its KKT residual is below
//! [`KKT_TOL`].

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covariance::CovarianceEstimate;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_checked, cholesky_solve, is_symmetric, sorted_eigen, EigenOrder, PD_PIVOT_TOL};
use crate::stats::{self, flagged_f64};

/// Relative KKT residual required of every solution.
pub const KKT_TOL: f64 = 1e-8;
/// Days whose prior estimate is worse conditioned than this are not traded.
pub const DEFAULT_COND_LIMIT: f64 = 1e9;
pub const TRADING_DAYS: f64 = 252.0;

const ADMM_MAX_ITER: usize = 50_000;
const ADMM_CHUNK: usize = 20;

/// Gross-leverage bound `‖w‖₁ ≤ l`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Leverage {
    Bounded(f64),
    #[default]
    Unbounded,
}

impl Leverage {
    pub fn new(l: f64) -> Result<Self> {
        if l.is_nan() {
            return Err(invalid("leverage is NaN"));
        }
        if l < 1.0 {
            return Err(Error::Infeasible(format!("leverage {l} < 1 cannot satisfy 1ᵀw = 1")));
        }
        Ok(if l.is_infinite() {
            Leverage::Unbounded
        } else {
            Leverage::Bounded(l)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            Leverage::Bounded(l) => l,
            Leverage::Unbounded => f64::INFINITY,
        }
    }
}

impl FromStr for Leverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "unbounded" => Ok(Leverage::Unbounded),
            other => {
                let l: f64 = other.parse().map_err(|_| invalid(format!("bad leverage {s:?}")))?;
                Leverage::new(l)
            }
        }
    }
}

impl fmt::Display for Leverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leverage::Bounded(l) => write!(f, "{l}"),
            Leverage::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for Leverage {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        flagged_f64::serialize(&self.value(), serializer)
    }
}

impl<'de> Deserialize<'de> for Leverage {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let l = flagged_f64::deserialize(deserializer)?;
        Leverage::new(l).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub date: Option<NaiveDate>,
    pub weights: Vec<f64>,
    /// `Σ|w|`.
    pub leverage_used: f64,
    pub traded: bool,
}

impl PortfolioWeights {
    pub fn traded(date: Option<NaiveDate>, weights: &DVector<f64>) -> Self {
        PortfolioWeights {
            date,
            leverage_used: weights.lp_norm(1),
            weights: weights.iter().copied().collect(),
            traded: true,
        }
    }

    pub fn flat(date: Option<NaiveDate>, n: usize) -> Self {
        PortfolioWeights {
            date,
            weights: vec![0.0; n],
            leverage_used: 0.0,
            traded: false,
        }
    }
}

fn check_sigma(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::ShapeMismatch {
            expected: "non-empty square covariance".into(),
            found: format!("{:?}", sigma.shape()),
        });
    }
    let scale = sigma.amax();
    if !is_symmetric(sigma, 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(invalid("covariance is not symmetric"));
    }
    cholesky_checked(sigma, PD_PIVOT_TOL).ok_or(Error::NotPositiveDefinite)
}

/// `Σ⁻¹1 / (1ᵀΣ⁻¹1)`.
pub fn gmv_weights(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let l = check_sigma(sigma)?;
    Ok(gmv_from_factor(&l))
}

fn gmv_from_factor(l: &DMatrix<f64>) -> DVector<f64> {
    let a = cholesky_solve(l, &DVector::from_element(l.nrows(), 1.0));
    let total = a.sum();
    a / total
}

/// GMV with the Moore–Penrose pseudo-inverse in place of `Σ⁻¹`; eigenvalues
/// below `1e-10 · λ_max` are treated as zero.
pub fn pinv_gmv_weights(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eig = sorted_eigen(sigma, EigenOrder::Descending)?;
    let n = sigma.nrows();
    let cutoff = 1e-10 * eig.values[0].max(0.0);
    let ones = DVector::from_element(n, 1.0);
    let mut a = DVector::zeros(n);
    for (c, &lambda) in eig.values.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.vectors.column(c);
            a += v * (v.dot(&ones) / lambda);
        }
    }
    let total = a.sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(Error::Infeasible(
            "pseudo-inverse GMV: 1 is orthogonal to the range of Σ".into(),
        ));
    }
    Ok(a / total)
}

pub fn portfolio_variance(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(sigma * w))
}

/// Relative KKT residual of `w` for the leverage-bounded problem, given the
/// multipliers of the sum constraint (`mu`) and the ℓ₁ bound (`lambda`)
/// in `2Σw − μ1 + λg = 0`, `g ∈ ∂‖w‖₁`.
pub fn kkt_residual(sigma: &DMatrix<f64>, w: &DVector<f64>, l: f64, mu: f64, lambda: f64) -> f64 {
    let grad = sigma * w * 2.0;
    let scale = grad.amax().max(mu.abs()).max(f64::MIN_POSITIVE);
    let mut stationarity = 0.0f64;
    for i in 0..w.len() {
        let r = if w[i] != 0.0 {
            (grad[i] - mu + lambda * w[i].signum()).abs()
        } else {
            ((grad[i] - mu).abs() - lambda).max(0.0)
        };
        stationarity = stationarity.max(r);
    }
    let gross = w.lp_norm(1);
    let mut residual = (stationarity / scale).max((w.sum() - 1.0).abs());
    residual = residual.max((-lambda).max(0.0) / scale);
    if l.is_finite() {
        residual = residual.max((gross - l).max(0.0) / l);
        residual = residual.max(lambda.abs() * (l - gross).abs() / scale);
    } else {
        residual = residual.max(lambda.abs() / scale);
    }
    residual
}

/// Euclidean projection onto `{z : ‖z‖₁ ≤ radius}`.
fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let t = (cumulative - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

/// Exact minimizer restricted to `support` with the given signs, or `None`
/// when the candidate is not primal-dual consistent.
fn polish(sigma: &DMatrix<f64>, support: &[usize], signs: &[f64], l: f64) -> Option<(DVector<f64>, f64)> {
    let n = sigma.nrows();
    let k = support.len();
    if k == 0 {
        return None;
    }
    let sub = DMatrix::from_fn(k, k, |a, b| sigma[(support[a], support[b])]);
    let chol = cholesky_checked(&sub, PD_PIVOT_TOL)?;
    let ones = DVector::from_element(k, 1.0);
    let s = DVector::from_column_slice(signs);
    let a = cholesky_solve(&chol, &ones);
    let long_only = (l - 1.0).abs() <= 1e-12 || signs.iter().all(|&x| x > 0.0);
    let (ws, mu, lambda) = if long_only {
        // 1ᵀw = sᵀw: only the sum constraint survives
        let total = a.sum();
        let ws = &a / total;
        (ws, 2.0 / total, 0.0)
    } else {
        let b = cholesky_solve(&chol, &s);
        // ½(μ 1ᵀa − λ 1ᵀb) = 1,  ½(μ sᵀa − λ sᵀb) = l
        let m = Matrix2::new(ones.dot(&a), -ones.dot(&b), s.dot(&a), -s.dot(&b)) * 0.5;
        let sol = m.try_inverse()? * Vector2::new(1.0, l);
        let ws = (&a * sol[0] - &b * sol[1]) * 0.5;
        (ws, sol[0], sol[1])
    };
    let wmax = ws.amax();
    for (x, &sg) in ws.iter().zip(signs) {
        if x * sg < -1e-14 * wmax {
            return None;
        }
    }
    let mut w = DVector::zeros(n);
    for (a, &i) in support.iter().enumerate() {
        w[i] = ws[a];
    }
    let (mu, lambda) = if long_only {
        // ν = μ − λ is identified; pick the smallest λ that covers the
        // off-support gradient
        let grad = sigma * &w * 2.0;
        let nu = mu;
        let top = grad.iter().fold(nu, |acc, &g| acc.max(g));
        let lambda = if (l - 1.0).abs() <= 1e-12 {
            0.5 * (top - nu)
        } else {
            lambda
        };
        (nu + lambda, lambda)
    } else {
        (mu, lambda)
    };
    let r = kkt_residual(sigma, &w, if long_only { 1.0f64.max(l) } else { l }, mu, lambda);
    (r <= KKT_TOL).then_some((w, r))
}

/// Leverage-bounded minimum-variance weights.
pub fn mean_variance_weights(sigma: &DMatrix<f64>, leverage: f64) -> Result<DVector<f64>> {
    let lev = Leverage::new(leverage)?;
    let chol = check_sigma(sigma)?;
    let n = sigma.nrows();
    let gmv = gmv_from_factor(&chol);
    let l = lev.value();
    if gmv.lp_norm(1) <= l {
        let mu = 2.0 * portfolio_variance(sigma, &gmv);
        let r = kkt_residual(sigma, &gmv, l, mu, 0.0);
        if r > KKT_TOL {
            return Err(Error::SolverFailed {
                iterations: 0,
                residual: r,
            });
        }
        return Ok(gmv);
    }

    let rho = 2.0 * sigma.trace() / n as f64;
    let mut m = sigma * 2.0;
    for i in 0..n {
        m[(i, i)] += rho;
    }
    let mchol = cholesky_checked(&m, PD_PIVOT_TOL).ok_or(Error::NotPositiveDefinite)?;
    let minv_one = cholesky_solve(&mchol, &DVector::from_element(n, 1.0));
    let denom = minv_one.sum();

    let mut z = project_l1_ball(&gmv, l);
    let mut u = DVector::zeros(n);
    let mut best = f64::INFINITY;
    let mut iterations = 0;
    while iterations < ADMM_MAX_ITER {
        for _ in 0..ADMM_CHUNK {
            let a = cholesky_solve(&mchol, &((&z - &u) * rho));
            let nu = (a.sum() - 1.0) / denom;
            let w = a - &minv_one * nu;
            z = project_l1_ball(&(&w + &u), l);
            u += w - &z;
        }
        iterations += ADMM_CHUNK;
        let support: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
        let signs: Vec<f64> = support.iter().map(|&i| z[i].signum()).collect();
        match polish(sigma, &support, &signs, l) {
            Some((w, _)) => return Ok(w),
            None => {
                let mu = 2.0 * portfolio_variance(sigma, &z);
                best = best.min(kkt_residual(sigma, &z, l, mu, 0.0));
            }
        }
    }
    Err(Error::SolverFailed {
        iterations,
        residual: best,
    })
}

/// How daily weights are formed from the prior day's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    #[default]
    MeanVariance,
    /// GMV through the pseudo-inverse, ignoring leverage.
    PseudoInverseGmv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub leverage: Leverage,
    pub cond_limit: f64,
    pub rule: WeightRule,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            leverage: Leverage::Unbounded,
            cond_limit: DEFAULT_COND_LIMIT,
            rule: WeightRule::MeanVariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceStats {
    pub mean: f64,
    pub stdev: f64,
    pub ann_vol: f64,
    #[serde(with = "flagged_f64")]
    pub sharpe: f64,
    pub cum_path: Vec<f64>,
}

/// Annualized volatility `stdev·√252` (sample stdev), Sharpe
/// `mean·252 / ann_vol` without a risk-free rate, and the running sum of
/// log returns. A zero stdev gives `±inf` (or NaN for a zero mean).
pub fn performance_stats(daily_returns: &[f64]) -> Result<PerformanceStats> {
    if daily_returns.is_empty() {
        return Err(invalid("no daily returns"));
    }
    let mean = stats::mean(daily_returns);
    let stdev = stats::sample_std(daily_returns);
    let ann_vol = stdev * TRADING_DAYS.sqrt();
    let sharpe = if stdev > 0.0 {
        mean * TRADING_DAYS / ann_vol
    } else if mean > 0.0 {
        f64::INFINITY
    } else if mean < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    };
    let cum_path = daily_returns
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    Ok(PerformanceStats {
        mean,
        stdev,
        ann_vol,
        sharpe,
        cum_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Trading days (the first input day is skipped).
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    pub ann_vol: f64,
    #[serde(with = "flagged_f64")]
    pub sharpe: f64,
    pub cum_path: Vec<f64>,
    pub skipped_days: usize,
    pub leverage: Leverage,
    #[serde(with = "flagged_f64")]
    pub cond_limit: f64,
    #[serde(skip)]
    pub weights: Vec<PortfolioWeights>,
}

/// Convenience wrapper over [`backtest_with`] using mean-variance weights.
pub fn backtest(
    estimates: &[(NaiveDate, CovarianceEstimate)],
    returns: &[(NaiveDate, DVector<f64>)],
    leverage: Leverage,
    cond_limit: f64,
) -> Result<BacktestReport> {
    backtest_with(
        estimates,
        returns,
        &BacktestConfig {
            leverage,
            cond_limit,
            rule: WeightRule::MeanVariance,
        },
    )
}

/// Day `t` holds weights from the estimate of day `t − 1` and earns
/// `wᵀ r_t` on that day's open-to-close log returns. Days whose prior
/// estimate has condition number above the limit stay flat.
pub fn backtest_with(
    estimates: &[(NaiveDate, CovarianceEstimate)],
    returns: &[(NaiveDate, DVector<f64>)],
    config: &BacktestConfig,
) -> Result<BacktestReport> {
    if estimates.len() != returns.len() {
        return Err(Error::DateMismatch(format!(
            "{} estimates but {} return days",
            estimates.len(),
            returns.len()
        )));
    }
    if returns.len() < 2 {
        return Err(invalid("a backtest needs at least two days"));
    }
    for ((de, _), (dr, _)) in estimates.iter().zip(returns) {
        if de != dr {
            return Err(Error::DateMismatch(format!("estimate {de} vs returns {dr}")));
        }
    }
    for pair in returns.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::DateMismatch(format!(
                "dates not increasing: {} then {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    let n = returns[0].1.len();
    for ((d, est), (_, r)) in estimates.iter().zip(returns) {
        if r.len() != n || est.matrix.nrows() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} assets"),
                found: format!("{} returns / {} estimate rows on {d}", r.len(), est.matrix.nrows()),
            });
        }
    }

    let weights: Vec<PortfolioWeights> = (1..returns.len())
        .into_par_iter()
        .map(|t| -> Result<PortfolioWeights> {
            let date = Some(returns[t].0);
            let prior = &estimates[t - 1].1;
            if !(prior.condition_number <= config.cond_limit) {
                return Ok(PortfolioWeights::flat(date, n));
            }
            let w = match config.rule {
                WeightRule::MeanVariance => mean_variance_weights(&prior.matrix, config.leverage.value())?,
                WeightRule::PseudoInverseGmv => pinv_gmv_weights(&prior.matrix)?,
            };
            Ok(PortfolioWeights::traded(date, &w))
        })
        .collect::<Result<_>>()?;

    let daily_returns: Vec<f64> = weights
        .iter()
        .zip(&returns[1..])
        .map(|(w, (_, r))| {
            if w.traded {
                w.weights.iter().zip(r.iter()).map(|(a, b)| a * b).sum()
            } else {
                0.0
            }
        })
        .collect();
    let skipped_days = weights.iter().filter(|w| !w.traded).count();
    if skipped_days > 0 {
        log::info!("{skipped_days} of {} days gated by condition number", weights.len());
    }
    let perf = performance_stats(&daily_returns)?;
    Ok(BacktestReport {
        dates: returns[1..].iter().map(|(d, _)| *d).collect(),
        daily_returns,
        ann_vol: perf.ann_vol,
        sharpe: perf.sharpe,
        cum_path: perf.cum_path,
        skipped_days,
        leverage: config.leverage,
        cond_limit: config.cond_limit,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n + 3, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.05
    }

    /// Pair (0, 1) strongly negatively correlated so GMV goes long both
    /// with heavy shorts elsewhere.
    fn negative_pair(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut s = random_pd(n, rng) * 0.1;
        s[(0, 0)] += 1.0;
        s[(1, 1)] += 1.0;
        s[(0, 1)] -= 0.95;
        s[(1, 0)] -= 0.95;
        let mut f = DMatrix::identity(n, n);
        for i in 2..n {
            f[(i, 0)] = 1.0 + rng.random::<f64>();
        }
        &f * s * f.transpose()
    }

    fn estimate(m: DMatrix<f64>) -> CovarianceEstimate {
        CovarianceEstimate::from_matrix(m, CovarianceKind::Realized, None).unwrap()
    }

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, d).unwrap()
    }

    #[test]
    fn gmv_closed_forms() {
        let w = gmv_weights(&DMatrix::identity(4, 4)).unwrap();
        for x in w.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
        let w = gmv_weights(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
        let singular = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(gmv_weights(&singular), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn gmv_beats_random_budget_portfolios() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = random_pd(6, &mut rng);
        let w = gmv_weights(&sigma).unwrap();
        let best = portfolio_variance(&sigma, &w);
        for _ in 0..1000 {
            let mut v = DVector::from_fn(6, |_, _| rng.random::<f64>() - 0.3);
            let total = v.sum();
            if total.abs() < 1e-3 {
                continue;
            }
            v /= total;
            assert!(best <= portfolio_variance(&sigma, &v) + 1e-12);
        }
    }

    #[test]
    fn pinv_matches_inverse_when_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = random_pd(5, &mut rng);
        let a = gmv_weights(&sigma).unwrap();
        let b = pinv_gmv_weights(&sigma).unwrap();
        assert!((a - b).amax() < 1e-9);
        let singular = DMatrix::from_element(3, 3, 1.0);
        let w = pinv_gmv_weights(&singular).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_leverage_is_gmv() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let w = mean_variance_weights(&sigma, f64::INFINITY).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-12 && (w[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn leverage_below_one_is_infeasible() {
        let sigma = DMatrix::identity(2, 2);
        assert!(matches!(mean_variance_weights(&sigma, 0.5), Err(Error::Infeasible(_))));
        assert!("0.9".parse::<Leverage>().is_err());
        assert_eq!("inf".parse::<Leverage>().unwrap(), Leverage::Unbounded);
        assert_eq!("3".parse::<Leverage>().unwrap(), Leverage::Bounded(3.0));
        assert_eq!(Leverage::Unbounded.to_string(), "inf");
        let json = serde_json::to_string(&Leverage::Unbounded).unwrap();
        assert_eq!(serde_json::from_str::<Leverage>(&json).unwrap(), Leverage::Unbounded);
    }

    #[test]
    fn unit_leverage_is_long_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let sigma = negative_pair(6, &mut rng);
            let w = mean_variance_weights(&sigma, 1.0).unwrap();
            assert!(w.iter().all(|&x| x >= -1e-10), "{w}");
            assert!((w.sum() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_non_increasing_in_leverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let sigma = negative_pair(8, &mut rng);
            let mut last = f64::INFINITY;
            for l in [1.0, 1.5, 3.0, 5.0, 7.0, f64::INFINITY] {
                let w = mean_variance_weights(&sigma, l).unwrap();
                assert!((w.sum() - 1.0).abs() <= 1e-8);
                assert!(w.lp_norm(1) <= l + 1e-8);
                let obj = portfolio_variance(&sigma, &w);
                assert!(obj <= last * (1.0 + 1e-10), "l={l}: {obj} > {last}");
                last = obj;
            }
        }
    }

    #[test]
    fn bounded_solution_matches_brute_force_in_two_dimensions() {
        // N = 2 with w = (t, 1 − t): minimize over a fine grid of t
        let sigma =
            DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]) + DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let gmv = gmv_weights(&sigma).unwrap();
        let l = 1.0 + 0.5 * (gmv.lp_norm(1) - 1.0);
        let w = mean_variance_weights(&sigma, l).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=200_000 {
            let t = -3.0 + 6.0 * k as f64 / 200_000.0;
            let v = DVector::from_vec(vec![t, 1.0 - t]);
            if v.lp_norm(1) <= l {
                best = best.min(portfolio_variance(&sigma, &v));
            }
        }
        let obj = portfolio_variance(&sigma, &w);
        assert!(obj <= best + 1e-9 && obj >= best - 1e-6, "{obj} vs {best}");
    }

    #[test]
    fn scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = negative_pair(6, &mut rng);
        for l in [1.0, 2.0, f64::INFINITY] {
            let a = mean_variance_weights(&sigma, l).unwrap();
            let b = mean_variance_weights(&(&sigma * 1e-4), l).unwrap();
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn l1_projection() {
        let v = DVector::from_vec(vec![3.0, -1.0, 0.5]);
        let p = project_l1_ball(&v, 2.0);
        assert!((p.lp_norm(1) - 2.0).abs() < 1e-12);
        assert_eq!(p, DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert_eq!(project_l1_ball(&v, 10.0), v);
    }

    #[test]
    fn performance_examples() {
        let p = performance_stats(&[0.001, 0.001, 0.001]).unwrap();
        assert_eq!(p.ann_vol, 0.0);
        assert_eq!(p.sharpe, f64::INFINITY);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"sharpe\":\"inf\""));

        let p = performance_stats(&[0.01, -0.01]).unwrap();
        assert_eq!(p.mean, 0.0);
        assert_eq!(p.sharpe, 0.0);

        let p = performance_stats(&[0.01, 0.02, 0.0]).unwrap();
        assert!((p.stdev - 0.01).abs() < 1e-15);
        assert!((p.ann_vol - 0.15874507866387544).abs() < 1e-12);
        assert!((p.sharpe - 15.874507866387544).abs() < 1e-9);
        assert_eq!(p.cum_path.len(), 3);
        assert!((p.cum_path[2] - 0.03).abs() < 1e-15);
        assert!(performance_stats(&[]).is_err());
    }

    #[test]
    fn ill_conditioned_days_are_flat() {
        let bad = estimate(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let estimates: Vec<_> = (1..=4).map(|d| (date(d), bad.clone())).collect();
        let returns: Vec<_> = (1..=4)
            .map(|d| (date(d), DVector::from_vec(vec![0.01, -0.02])))
            .collect();
        let r = backtest(&estimates, &returns, Leverage::Unbounded, DEFAULT_COND_LIMIT).unwrap();
        assert_eq!(r.skipped_days, 3);
        assert_eq!(r.daily_returns, vec![0.0; 3]);
        assert!(r
            .weights
            .iter()
            .all(|w| !w.traded && w.weights.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn single_asset_earns_its_return() {
        let est = estimate(DMatrix::from_element(1, 1, 0.04));
        let rs = [0.01, -0.005, 0.02, 0.003];
        let estimates: Vec<_> = (1..=4).map(|d| (date(d), est.clone())).collect();
        let returns: Vec<_> = rs
            .iter()
            .enumerate()
            .map(|(k, &r)| (date(k as u32 + 1), DVector::from_element(1, r)))
            .collect();
        let report = backtest(&estimates, &returns, Leverage::Unbounded, DEFAULT_COND_LIMIT).unwrap();
        assert_eq!(report.daily_returns, rs[1..].to_vec());
        assert_eq!(report.dates, vec![date(2), date(3), date(4)]);
    }

    #[test]
    fn misaligned_dates_are_rejected() {
        let est = estimate(DMatrix::identity(2, 2));
        let estimates = vec![(date(1), est.clone()), (date(2), est)];
        let returns = vec![(date(1), DVector::zeros(2)), (date(3), DVector::zeros(2))];
        assert!(matches!(
            backtest(&estimates, &returns, Leverage::Unbounded, DEFAULT_COND_LIMIT),
            Err(Error::DateMismatch(_))
        ));
    }

    #[test]
    fn traded_days_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let estimates: Vec<_> = (1..=6)
            .map(|d| (date(d), estimate(negative_pair(5, &mut rng))))
            .collect();
        let returns: Vec<_> = (1..=6)
            .map(|d| (date(d), DVector::from_fn(5, |_, _| rng.random::<f64>() * 0.02 - 0.01)))
            .collect();
        let r = backtest(&estimates, &returns, Leverage::Bounded(2.0), DEFAULT_COND_LIMIT).unwrap();
        for w in r.weights.iter().filter(|w| w.traded) {
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            assert!(w.leverage_used <= 2.0 + 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bounded_solutions_certify(seed in any::<u64>(), n in 2usize..9, frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = random_pd(n, &mut rng);
            let gmv = gmv_weights(&sigma).unwrap();
            let l = (1.0 + frac * (gmv.lp_norm(1) - 1.0)).max(1.0);
            let w = mean_variance_weights(&sigma, l).unwrap();
            prop_assert!((w.sum() - 1.0).abs() <= 1e-8);
            prop_assert!(w.lp_norm(1) <= l + 1e-8);
            prop_assert!(portfolio_variance(&sigma, &w) >= portfolio_variance(&sigma, &gmv) * (1.0 - 1e-12));
        }

        #[test]
        fn gmv_certificate(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = random_pd(n, &mut rng);
            let w = mean_variance_weights(&sigma, f64::INFINITY).unwrap();
            let g = &sigma * &w;
            let c = g.mean();
            prop_assert!((g.add_scalar(-c)).amax() <= 1e-6 * c.abs());
        }
    }
}
