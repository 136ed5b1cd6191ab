//! Co-occurrence counts, co-trading scores and co-trading matrices.
//!
//! Two trades co-occur at level δ when their timestamps differ by strictly
//! less than δ. For stocks `i` and `j`, `L(j→i)` counts, for every trade of
//! `i`, the trades of `j` inside its open window `(τ − δ, τ + δ)`; the count
//! score normalizes `L(i→j) + L(j→i)` by `√|S_i| · √|S_j|`. The volume score
//! sums traded quantities instead of counting trades.
//!
//! Counting uses a two-pointer sweep over the sorted tapes, so a pair costs
//! `O(n + m)` regardless of how many trades co-occur.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::trade_model::{Side, Trade, TradeTape};

/// Which trades of a tape take part in a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionFilter {
    Buy,
    Sell,
    All,
}

impl DirectionFilter {
    pub fn accepts(self, side: Side) -> bool {
        match self {
            DirectionFilter::All => true,
            DirectionFilter::Buy => side == Side::Buy,
            DirectionFilter::Sell => side == Side::Sell,
        }
    }

    pub fn apply(self, trades: &[Trade]) -> Cow<'_, [Trade]> {
        match self {
            DirectionFilter::All => Cow::Borrowed(trades),
            _ => Cow::Owned(trades.iter().filter(|t| self.accepts(t.side)).copied().collect()),
        }
    }
}

impl FromStr for DirectionFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" | "b" => Ok(DirectionFilter::Buy),
            "sell" | "s" => Ok(DirectionFilter::Sell),
            "all" => Ok(DirectionFilter::All),
            other => Err(invalid(format!("unknown direction filter {other:?}"))),
        }
    }
}

impl fmt::Display for DirectionFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionFilter::Buy => "buy",
            DirectionFilter::Sell => "sell",
            DirectionFilter::All => "all",
        })
    }
}

/// Whether co-occurring trades are counted or weighted by quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Count,
    Volume,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" => Ok(Measure::Count),
            "volume" => Ok(Measure::Volume),
            other => Err(invalid(format!("unknown measure {other:?}"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Count => "count",
            Measure::Volume => "volume",
        })
    }
}

/// Symmetric matrix of co-trading scores for one day or period.
///
/// Row `r` corresponds to symbol id `symbols[r]`. The diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoTradingMatrix {
    pub label: String,
    pub symbols: Vec<usize>,
    pub values: DMatrix<f64>,
    pub delta_ns: i64,
    pub directions: (DirectionFilter, DirectionFilter),
    pub measure: Measure,
}

impl CoTradingMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    fn same_setup(&self, other: &CoTradingMatrix) -> bool {
        self.symbols == other.symbols
            && self.delta_ns == other.delta_ns
            && self.directions == other.directions
            && self.measure == other.measure
    }
}

/// Co-occurrence totals for one ordered pair of tapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CrossCounts {
    /// Trades of `i` found in the windows of trades of `j`.
    pub i_to_j: u64,
    /// Trades of `j` found in the windows of trades of `i`.
    pub j_to_i: u64,
}

fn check_sorted(trades: &[Trade]) -> Result<()> {
    match trades.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
        Some(position) => Err(Error::UnsortedTape {
            symbol: trades[position].symbol,
            position: position + 1,
        }),
        None => Ok(()),
    }
}

fn check_delta(delta_ns: i64) -> Result<()> {
    if delta_ns <= 0 {
        return Err(invalid(format!("delta must be positive, got {delta_ns}")));
    }
    Ok(())
}

/// Sum over `anchors` of the weights of `others` strictly inside each
/// anchor's window. Both slices must be sorted by timestamp.
fn windowed_sum(anchors: &[Trade], others: &[Trade], delta_ns: i64, weight: impl Fn(&Trade) -> u128) -> u128 {
    let mut prefix = Vec::with_capacity(others.len() + 1);
    prefix.push(0u128);
    let mut acc = 0u128;
    for t in others {
        acc += weight(t);
        prefix.push(acc);
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut total = 0u128;
    for anchor in anchors {
        let start = anchor.timestamp_ns - delta_ns;
        let end = anchor.timestamp_ns + delta_ns;
        while lo < others.len() && others[lo].timestamp_ns <= start {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < others.len() && others[hi].timestamp_ns < end {
            hi += 1;
        }
        total += prefix[hi] - prefix[lo];
    }
    total
}

/// Counts co-occurrences between two sorted trade sequences.
pub fn count_cross_cooccurrences(trades_i: &[Trade], trades_j: &[Trade], delta_ns: i64) -> Result<CrossCounts> {
    check_delta(delta_ns)?;
    check_sorted(trades_i)?;
    check_sorted(trades_j)?;
    Ok(CrossCounts {
        i_to_j: windowed_sum(trades_j, trades_i, delta_ns, |_| 1) as u64,
        j_to_i: windowed_sum(trades_i, trades_j, delta_ns, |_| 1) as u64,
    })
}

/// Quantity-weighted analogue of [`count_cross_cooccurrences`]:
/// `(V(i→j), V(j→i))`.
pub fn volume_cross_cooccurrences(trades_i: &[Trade], trades_j: &[Trade], delta_ns: i64) -> Result<(u128, u128)> {
    check_delta(delta_ns)?;
    check_sorted(trades_i)?;
    check_sorted(trades_j)?;
    let q = |t: &Trade| t.quantity as u128;
    Ok((
        windowed_sum(trades_j, trades_i, delta_ns, q),
        windowed_sum(trades_i, trades_j, delta_ns, q),
    ))
}

/// Co-trading score of two sorted trade sequences. Empty sides score 0.
pub fn cotrading_score(trades_i: &[Trade], trades_j: &[Trade], delta_ns: i64, measure: Measure) -> Result<f64> {
    match measure {
        Measure::Count => {
            let counts = count_cross_cooccurrences(trades_i, trades_j, delta_ns)?;
            if trades_i.is_empty() || trades_j.is_empty() {
                return Ok(0.0);
            }
            let numerator = (counts.i_to_j + counts.j_to_i) as f64;
            Ok(numerator / ((trades_i.len() as f64).sqrt() * (trades_j.len() as f64).sqrt()))
        }
        Measure::Volume => {
            let (v_ij, v_ji) = volume_cross_cooccurrences(trades_i, trades_j, delta_ns)?;
            let total_i: u128 = trades_i.iter().map(|t| t.quantity as u128).sum();
            let total_j: u128 = trades_j.iter().map(|t| t.quantity as u128).sum();
            if total_i == 0 || total_j == 0 {
                return Ok(0.0);
            }
            let numerator = (v_ij + v_ji) as f64;
            Ok(numerator / ((total_i as f64).sqrt() * (total_j as f64).sqrt()))
        }
    }
}

/// Builds the daily co-trading matrix; row order follows `tapes`.
///
/// When the two direction filters differ, entry `(i, j)` is the mean of the
/// two ordered scores `c(i as d1, j as d2)` and `c(j as d1, i as d2)` so the
/// matrix stays symmetric.
pub fn build_daily_matrix(
    tapes: &[TradeTape],
    delta_ns: i64,
    directions: (DirectionFilter, DirectionFilter),
    measure: Measure,
) -> Result<CoTradingMatrix> {
    check_delta(delta_ns)?;
    let mut seen = HashSet::new();
    for tape in tapes {
        if !seen.insert(tape.symbol()) {
            return Err(Error::DuplicateSymbol(tape.symbol()));
        }
        check_sorted(tape.trades())?;
    }
    let (first, second) = directions;
    let filtered_first: Vec<Cow<'_, [Trade]>> = tapes.iter().map(|t| first.apply(t.trades())).collect();
    let filtered_second: Vec<Cow<'_, [Trade]>> = if first == second {
        Vec::new()
    } else {
        tapes.iter().map(|t| second.apply(t.trades())).collect()
    };

    let n = tapes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if first == second {
                cotrading_score(&filtered_first[i], &filtered_first[j], delta_ns, measure)
            } else {
                let forward = cotrading_score(&filtered_first[i], &filtered_second[j], delta_ns, measure)?;
                let backward = cotrading_score(&filtered_first[j], &filtered_second[i], delta_ns, measure)?;
                Ok(0.5 * (forward + backward))
            }
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::zeros(n, n);
    for (&(i, j), &score) in pairs.iter().zip(&scores) {
        values[(i, j)] = score;
        values[(j, i)] = score;
    }
    let label = tapes.first().map(|t| t.day().to_string()).unwrap_or_default();
    Ok(CoTradingMatrix {
        label,
        symbols: tapes.iter().map(TradeTape::symbol).collect(),
        values,
        delta_ns,
        directions,
        measure,
    })
}

/// Elementwise mean of matrices sharing symbols, δ, directions and measure.
pub fn aggregate_matrices(matrices: &[CoTradingMatrix]) -> Result<CoTradingMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| invalid("cannot aggregate an empty list of matrices"))?;
    let mut sum = DMatrix::zeros(first.n(), first.n());
    for m in matrices {
        if m.values.shape() != first.values.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", first.values.shape()),
                found: format!("{:?}", m.values.shape()),
            });
        }
        if !m.same_setup(first) {
            return Err(invalid(format!(
                "matrix {} was built with different symbols or settings than {}",
                m.label, first.label
            )));
        }
        sum += &m.values;
    }
    sum /= matrices.len() as f64;
    let last = matrices.last().expect("non-empty");
    let label = if matrices.len() == 1 {
        first.label.clone()
    } else {
        format!("{}..{}", first.label, last.label)
    };
    Ok(CoTradingMatrix {
        label,
        symbols: first.symbols.clone(),
        values: sum,
        delta_ns: first.delta_ns,
        directions: first.directions,
        measure: first.measure,
    })
}
