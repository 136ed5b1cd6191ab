//! Seeded synthetic markets with a planted partition.
//!
//! Two independent generators share one partition of the symbols:
//!
//! * trade tapes, where each cluster fires Poisson bursts that make every
//!   member trade within a short jitter window, on top of independent
//!   Poisson background trading;
//! * gridded returns from `r_τ = β f_τ + u_τ`, with `u_τ` correlated only
//!   inside clusters.
//!
//! Every random stream is a ChaCha8 generator keyed by the config seed, a
//! purpose tag and the day index, so days can be generated in any order.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::clustering::Partition;
use crate::covariance::ReturnPanel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_checked, PD_PIVOT_TOL};
use crate::trade_model::{aggregate_trades, filter_session, SessionBounds, Side, SymbolTable, Trade, TradeTape};
use crate::NANOS_PER_SEC;

const STREAM_TRADES: u64 = 0x7472_6164;
const STREAM_RETURNS: u64 = 0x7265_7473;
const STREAM_BETA: u64 = 0x6265_7461;

const MIN_QUANTITY: f64 = 100.0;
const MAX_QUANTITY: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_symbols: usize,
    pub n_clusters: usize,
    /// Explicit cluster sizes; when `None` symbols are split as evenly as
    /// possible, larger clusters first.
    pub cluster_sizes: Option<Vec<usize>>,
    pub days: usize,
    pub start_date: NaiveDate,
    pub session: SessionBounds,
    /// Bursts per hour, per cluster.
    pub burst_rate_per_hour: f64,
    /// Background trades per hour, per symbol.
    pub background_rate_per_hour: f64,
    /// Full width of the uniform jitter around each burst time.
    pub jitter_ns: i64,
    /// Co-occurrence window the jitter must stay below.
    pub delta_ns: i64,
    pub n_factors: usize,
    /// Per-interval factor standard deviation.
    pub factor_vol: f64,
    /// Per-interval idiosyncratic standard deviation.
    pub idio_vol: f64,
    /// Correlation of idiosyncratic shocks inside a cluster.
    pub block_correlation: f64,
    pub sampling_ns: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_symbols: 50,
            n_clusters: 5,
            cluster_sizes: None,
            days: 1,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 2).expect("valid date"),
            session: SessionBounds::default(),
            burst_rate_per_hour: 60.0,
            background_rate_per_hour: 600.0,
            jitter_ns: 200_000_000,
            delta_ns: crate::DEFAULT_DELTA_NS,
            n_factors: 2,
            factor_vol: 1e-3,
            idio_vol: 1e-3,
            block_correlation: 0.3,
            sampling_ns: 300 * NANOS_PER_SEC,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 || self.n_clusters == 0 || self.n_clusters > self.n_symbols {
            return Err(invalid(format!(
                "need 1 ≤ clusters ≤ symbols, got {} clusters for {} symbols",
                self.n_clusters, self.n_symbols
            )));
        }
        if let Some(sizes) = &self.cluster_sizes {
            if sizes.len() != self.n_clusters || sizes.iter().sum::<usize>() != self.n_symbols || sizes.contains(&0) {
                return Err(invalid(
                    "cluster sizes must be positive, one per cluster, summing to the symbol count",
                ));
            }
        }
        if self.days == 0 {
            return Err(invalid("need at least one day"));
        }
        for (name, rate) in [
            ("burst rate", self.burst_rate_per_hour),
            ("background rate", self.background_rate_per_hour),
        ] {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(invalid(format!("{name} must be finite and non-negative, got {rate}")));
            }
        }
        if self.jitter_ns < 0 || self.jitter_ns >= self.delta_ns {
            return Err(invalid(format!(
                "jitter {} ns must be below the co-occurrence window {} ns",
                self.jitter_ns, self.delta_ns
            )));
        }
        for (name, v) in [("factor vol", self.factor_vol), ("idiosyncratic vol", self.idio_vol)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.idio_vol > 0.0) {
            return Err(invalid("idiosyncratic vol must be positive for a PD covariance"));
        }
        if !(self.block_correlation > -1.0 && self.block_correlation < 1.0) {
            return Err(invalid(format!(
                "block correlation {} outside (−1, 1)",
                self.block_correlation
            )));
        }
        if self.sampling_ns <= 0 || self.session.length_ns() % self.sampling_ns != 0 {
            return Err(invalid("sampling interval must divide the session length"));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        if let Some(sizes) = &self.cluster_sizes {
            return sizes.clone();
        }
        let base = self.n_symbols / self.n_clusters;
        let extra = self.n_symbols % self.n_clusters;
        (0..self.n_clusters).map(|c| base + usize::from(c < extra)).collect()
    }

    /// Contiguous blocks: symbol ids `0..s₀` are cluster 0, and so on.
    pub fn planted_partition(&self) -> Result<Partition> {
        self.validate()?;
        let assignments = self
            .sizes()
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        Partition::new(assignments, self.n_clusters)
    }

    /// Tickers `S000, S001, …` with the planted cluster as sector label.
    pub fn symbol_table(&self) -> Result<SymbolTable> {
        let partition = self.planted_partition()?;
        let width = (self.n_symbols.max(2) - 1).to_string().len().max(3);
        let mut table = SymbolTable::from_tickers((0..self.n_symbols).map(|i| format!("S{i:0width$}")))?;
        for (i, &c) in partition.assignments.iter().enumerate() {
            table.set_sector(i, format!("C{c}"))?;
        }
        Ok(table)
    }

    /// Weekdays from `start_date`.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.start_date;
        while out.len() < self.days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    }

    pub fn intervals_per_day(&self) -> usize {
        (self.session.length_ns() / self.sampling_ns) as usize
    }
}

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.rotate_left(32));
    rng.set_stream(index);
    rng
}

/// Sorted arrival times of a homogeneous Poisson process on `[0, length)`.
fn poisson_times(rng: &mut ChaCha8Rng, rate_per_hour: f64, length_ns: i64) -> Vec<f64> {
    if rate_per_hour <= 0.0 {
        return Vec::new();
    }
    let rate_per_ns = rate_per_hour / (3600.0 * NANOS_PER_SEC as f64);
    let exp = Exp::new(rate_per_ns).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= length_ns as f64 {
            return out;
        }
        out.push(t);
    }
}

fn random_trade(rng: &mut ChaCha8Rng, timestamp_ns: i64, symbol: usize) -> Trade {
    let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
    let q = (MIN_QUANTITY.ln() + rng.random::<f64>() * (MAX_QUANTITY.ln() - MIN_QUANTITY.ln())).exp();
    Trade {
        timestamp_ns,
        symbol,
        side,
        quantity: (q.round() as u64).clamp(MIN_QUANTITY as u64, MAX_QUANTITY as u64),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTrades {
    pub symbols: SymbolTable,
    pub planted: Partition,
    pub dates: Vec<NaiveDate>,
    /// `days[d][i]` is the tape of symbol `i` on `dates[d]`.
    pub days: Vec<Vec<TradeTape>>,
}

/// Tapes for one day (`day` indexes [`SynthConfig::dates`]).
pub fn gen_day_tapes(config: &SynthConfig, day: usize) -> Result<Vec<TradeTape>> {
    config.validate()?;
    let date = *config
        .dates()
        .get(day)
        .ok_or_else(|| invalid(format!("day {day} beyond {} configured days", config.days)))?;
    let partition = config.planted_partition()?;
    let length = config.session.length_ns();
    let open = config.session.open_ns();
    let hours = length as f64 / (3600.0 * NANOS_PER_SEC as f64);
    if config.burst_rate_per_hour > 0.0 && config.burst_rate_per_hour * hours < 1.0 {
        log::warn!("session of {hours:.3} h expects fewer than one burst per cluster");
    }
    let mut rng = stream(config.seed, STREAM_TRADES, day as u64);
    let mut per_symbol: Vec<Vec<Trade>> = vec![Vec::new(); config.n_symbols];
    let members: Vec<Vec<usize>> = (0..config.n_clusters)
        .map(|c| {
            (0..config.n_symbols)
                .filter(|&i| partition.assignments[i] == c)
                .collect()
        })
        .collect();
    let half = config.jitter_ns as f64 / 2.0;
    for cluster in &members {
        for t in poisson_times(&mut rng, config.burst_rate_per_hour, length) {
            for &i in cluster {
                let jitter = if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
                let ts = open + (t + jitter).floor() as i64;
                per_symbol[i].push(random_trade(&mut rng, ts, i));
            }
        }
    }
    for (i, trades) in per_symbol.iter_mut().enumerate() {
        for t in poisson_times(&mut rng, config.background_rate_per_hour, length) {
            trades.push(random_trade(&mut rng, open + t.floor() as i64, i));
        }
    }
    per_symbol
        .into_iter()
        .enumerate()
        .map(|(i, trades)| {
            let tape = TradeTape::new(i, date, aggregate_trades(trades))?;
            Ok(filter_session(&tape, config.session))
        })
        .collect()
}

pub fn gen_clustered_trades(config: &SynthConfig) -> Result<SyntheticTrades> {
    config.validate()?;
    let days = (0..config.days)
        .into_par_iter()
        .map(|d| gen_day_tapes(config, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticTrades {
        symbols: config.symbol_table()?,
        planted: config.planted_partition()?,
        dates: config.dates(),
        days,
    })
}

#[derive(Debug, Clone)]
pub struct FactorWorld {
    pub beta: DMatrix<f64>,
    /// `β Σ^f βᵀ + Σ^u` for one sampling interval.
    pub sigma_interval: DMatrix<f64>,
    pub idio_cov: DMatrix<f64>,
    pub planted: Partition,
    pub dates: Vec<NaiveDate>,
    pub panels: Vec<ReturnPanel>,
}

impl FactorWorld {
    /// Covariance of a full day's summed returns, `m · Σ_interval`; this is
    /// what the uncentered realized covariance estimates.
    pub fn sigma_daily(&self) -> DMatrix<f64> {
        let m = self.panels.first().map_or(0, |p| p.n_intervals());
        &self.sigma_interval * m as f64
    }

    /// Open-to-close log return of every symbol, per day.
    pub fn open_close_returns(&self) -> Vec<(NaiveDate, DVector<f64>)> {
        self.dates
            .iter()
            .zip(&self.panels)
            .map(|(d, p)| (*d, p.total_returns()))
            .collect()
    }
}

/// Member indices of one cluster with the lower factor of its block.
type Block = (Vec<usize>, DMatrix<f64>);

/// Block-diagonal idiosyncratic covariance and a lower factor for each block.
fn idio_blocks(config: &SynthConfig, partition: &Partition) -> Result<(DMatrix<f64>, Vec<Block>)> {
    let n = config.n_symbols;
    let v = config.idio_vol * config.idio_vol;
    let rho = config.block_correlation;
    let mut cov = DMatrix::zeros(n, n);
    let mut blocks = Vec::with_capacity(partition.k);
    for c in 0..partition.k {
        let members: Vec<usize> = (0..n).filter(|&i| partition.assignments[i] == c).collect();
        let s = members.len();
        let block = DMatrix::from_fn(s, s, |a, b| if a == b { v } else { rho * v });
        let l = cholesky_checked(&block, PD_PIVOT_TOL).ok_or_else(|| {
            Error::Infeasible(format!(
                "block correlation {rho} is not positive definite for a block of {s}"
            ))
        })?;
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                cov[(i, j)] = block[(a, b)];
            }
        }
        blocks.push((members, l));
    }
    Ok((cov, blocks))
}

/// Factor loadings: the first column in `[0.5, 1.5]` (a market factor),
/// later columns standard normal scaled by 0.5.
fn draw_beta(config: &SynthConfig) -> DMatrix<f64> {
    let mut rng = stream(config.seed, STREAM_BETA, 0);
    DMatrix::from_fn(config.n_symbols, config.n_factors, |_, k| {
        if k == 0 {
            rng.random_range(0.5..1.5)
        } else {
            0.5 * rng.sample::<f64, _>(StandardNormal)
        }
    })
}

pub fn gen_factor_returns(config: &SynthConfig) -> Result<FactorWorld> {
    config.validate()?;
    let planted = config.planted_partition()?;
    let (idio_cov, blocks) = idio_blocks(config, &planted)?;
    let beta = draw_beta(config);
    let fv = config.factor_vol * config.factor_vol;
    let sigma_interval = &beta * beta.transpose() * fv + &idio_cov;
    if cholesky_checked(&sigma_interval, PD_PIVOT_TOL).is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let m = config.intervals_per_day();
    let grid: Vec<i64> = (0..m as i64)
        .map(|k| config.session.open_ns() + k * config.sampling_ns)
        .collect();
    let n = config.n_symbols;
    let panels = (0..config.days)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(config.seed, STREAM_RETURNS, d as u64);
            let mut r = DMatrix::zeros(n, m);
            for tau in 0..m {
                let f = DVector::from_fn(config.n_factors, |_, _| {
                    config.factor_vol * rng.sample::<f64, _>(StandardNormal)
                });
                let mut col = &beta * f;
                for (members, l) in &blocks {
                    let z = DVector::from_fn(members.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                    let u = l * z;
                    for (a, &i) in members.iter().enumerate() {
                        col[i] += u[a];
                    }
                }
                r.set_column(tau, &col);
            }
            ReturnPanel::new(grid.clone(), r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorWorld {
        beta,
        sigma_interval,
        idio_cov,
        planted,
        dates: config.dates(),
        panels,
    })
}

/// Mid quotes exactly on the sampling grid (including the close) that
/// reproduce a panel's log returns, starting each symbol at `start_price`.
pub fn quotes_from_panel(panel: &ReturnPanel, sampling_ns: i64, start_price: f64) -> Vec<Vec<(i64, f64)>> {
    let m = panel.n_intervals();
    (0..panel.n_symbols())
        .map(|i| {
            let mut log_p = start_price.ln();
            let mut out = Vec::with_capacity(m + 1);
            let first = panel.grid.first().copied().unwrap_or(0);
            out.push((first, log_p.exp()));
            for tau in 0..m {
                log_p += panel.returns[(i, tau)];
                out.push((panel.grid[tau] + sampling_ns, log_p.exp()));
            }
            out
        })
        .collect()
}

/// Nested planted affinity: `n_super` groups, each made of `subs_per_super`
/// sub-groups of `sub_size` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedAffinity {
    pub n_super: usize,
    pub subs_per_super: usize,
    pub sub_size: usize,
    pub within_sub: f64,
    pub within_super: f64,
    pub across: f64,
    /// Half-width of the uniform symmetric noise added to off-diagonal entries.
    pub noise: f64,
}

impl Default for NestedAffinity {
    fn default() -> Self {
        NestedAffinity {
            n_super: 5,
            subs_per_super: 2,
            sub_size: 5,
            within_sub: 1.0,
            within_super: 0.3,
            across: 0.02,
            noise: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedAffinity {
    pub matrix: DMatrix<f64>,
    pub coarse: Partition,
    pub fine: Partition,
}

pub fn planted_affinity_matrix(layout: &NestedAffinity, seed: u64) -> Result<PlantedAffinity> {
    let n_sub = layout.n_super * layout.subs_per_super;
    let n = n_sub * layout.sub_size;
    if n == 0 {
        return Err(invalid("empty nested affinity"));
    }
    if layout.noise < 0.0 || layout.across - layout.noise < 0.0 {
        return Err(invalid("noise must keep every entry non-negative"));
    }
    let fine: Vec<usize> = (0..n).map(|i| i / layout.sub_size).collect();
    let coarse: Vec<usize> = fine.iter().map(|s| s / layout.subs_per_super).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let base = if fine[i] == fine[j] {
                layout.within_sub
            } else if coarse[i] == coarse[j] {
                layout.within_super
            } else {
                layout.across
            };
            let noise = if layout.noise > 0.0 {
                rng.random_range(-layout.noise..layout.noise)
            } else {
                0.0
            };
            m[(i, j)] = base + noise;
            m[(j, i)] = base + noise;
        }
    }
    Ok(PlantedAffinity {
        matrix: m,
        coarse: Partition::new(coarse, layout.n_super)?,
        fine: Partition::new(fine, n_sub)?,
    })
}
