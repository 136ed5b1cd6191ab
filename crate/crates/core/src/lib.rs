//! Co-trading networks built from executed trades.
//!
//! The crate turns per-symbol trade tapes into daily co-trading matrices,
//! analyses those matrices as weighted networks (spanning trees, centrality,
//! spectral clusters), relates them to realized covariance through
//! permutation-based network regression, and uses the clusters to build a
//! block-thresholded factor covariance estimator for mean-variance
//! portfolios. Every stage can be exercised on seeded synthetic data with a
//! planted partition (see [`synth`]).
//!
//! Shared domain types are re-exported at the crate root.

pub mod clustering;
pub mod cooccurrence;
pub mod covariance;
pub mod error;
pub mod graph_analysis;
pub mod io;
pub mod linalg;
pub mod network_regression;
pub mod portfolio;
pub mod stats;
pub mod synth;
pub mod trade_model;

pub use clustering::{AriSeries, Partition};
pub use cooccurrence::{CoTradingMatrix, DirectionFilter, Measure};
pub use covariance::{CovarianceEstimate, CovarianceKind, ReturnPanel};
pub use error::{Error, Result};
pub use graph_analysis::{Edge, EdgeList};
pub use network_regression::{RegressionResult, SectorMatrix};
pub use portfolio::{BacktestReport, Leverage, PortfolioWeights};
pub use trade_model::{Side, SymbolTable, Trade, TradeTape};

/// Default co-occurrence half-width: 500 ms in nanoseconds.
pub const DEFAULT_DELTA_NS: i64 = 500_000_000;

/// Nanoseconds in one second.
pub const NANOS_PER_SEC: i64 = 1_000_000_000;

/// 09:30 in nanoseconds since midnight.
pub const DEFAULT_OPEN_NS: i64 = (9 * 3600 + 30 * 60) * NANOS_PER_SEC;

/// 16:00 in nanoseconds since midnight.
pub const DEFAULT_CLOSE_NS: i64 = 16 * 3600 * NANOS_PER_SEC;
