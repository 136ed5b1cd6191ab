//! `cotrade`: the co-trading pipeline as composable subcommands.

mod commands;
mod errors;
mod manifest;
mod pipeline;
mod settings;
mod values;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use cotrade::covariance::SnapPolicy;
use cotrade::graph_analysis::{DEFAULT_CENTRALITY_MAX_ITER, DEFAULT_CENTRALITY_TOL};
use cotrade::network_regression::DEFAULT_PERMUTATIONS;
use cotrade::portfolio::DEFAULT_COND_LIMIT;
use cotrade::synth::SynthConfig;
use cotrade::trade_model::SessionBounds;
use cotrade::{Leverage, Measure, DEFAULT_CLOSE_NS, DEFAULT_DELTA_NS, DEFAULT_OPEN_NS, NANOS_PER_SEC};

use commands::{BacktestParams, CooccurParams, EventFormat, RcovParams, RegressParams};
use errors::{exit_code, validation, EXIT_OK, EXIT_VALIDATION};
use manifest::Run;
use settings::Settings;
use values::{Clock, Directions, Sizes, Snap};

/// Co-trading networks, clusters, network regressions and cluster-block
/// covariance backtests from trade tapes.
#[derive(Debug, Parser)]
#[command(name = "cotrade", version, propagate_version = true)]
struct Cli {
    /// Flat key = value config file; flags override its values
    #[arg(long, global = true, value_name = "FILE", display_order = 1000)]
    config: Option<PathBuf>,
    /// Maximum worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N", display_order = 1000)]
    threads: Option<usize>,
    /// Log more to standard error (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count, display_order = 1000)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an event file into a trade tape
    Ingest(IngestArgs),
    /// Build a daily co-trading matrix from a trade tape
    Cooccur(CooccurArgs),
    /// Average co-trading matrices over a period
    Aggregate(AggregateArgs),
    /// Maximum spanning tree of a matrix
    Mst(MatrixOut),
    /// Keep the strongest fraction of edges
    Threshold(ThresholdArgs),
    /// Eigenvector centrality of a matrix
    Centrality(CentralityArgs),
    /// Sector-level meta network
    Meta(MetaArgs),
    /// Spectral clustering of a matrix
    Cluster(ClusterArgs),
    /// ARI of daily partitions against a reference partition
    Ari(AriArgs),
    /// Pairwise ARI between daily partitions
    Heatmap(HeatmapArgs),
    /// Cluster the days of an ARI heatmap into regimes
    Regimes(RegimesArgs),
    /// Realized covariance from intraday quotes
    Rcov(RcovArgs),
    /// Cluster-block factor covariance estimate
    Estimate(EstimateArgs),
    /// Daily QAP (or MRQAP with sectors) of covariance on co-trading
    Regress(RegressArgs),
    /// Out-of-sample mean-variance backtest
    Backtest(BacktestArgs),
    /// Seeded synthetic tapes, quotes and returns with a planted partition
    Synth(SynthArgs),
    /// Synthetic end-to-end run with a summary
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Session open, HH:MM[:SS] [key: open] [default: 09:30]
    #[arg(long, value_name = "HH:MM")]
    open: Option<Clock>,
    /// Session close, HH:MM[:SS] [key: close] [default: 16:00]
    #[arg(long, value_name = "HH:MM")]
    close: Option<Clock>,
}

impl SessionArgs {
    fn resolve(&self, s: &mut Settings) -> Result<SessionBounds> {
        let open = s.pick("open", self.open, Clock(DEFAULT_OPEN_NS))?;
        let close = s.pick("close", self.close, Clock(DEFAULT_CLOSE_NS))?;
        Ok(SessionBounds::new(open.0, close.0)?)
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Event file
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Layout of the event file
    #[arg(long, value_enum, default_value_t = EventFormat::Normalized)]
    format: EventFormat,
    /// Ticker for files without a symbol column (LOBSTER default: file name up to the first "_")
    #[arg(long)]
    ticker: Option<String>,
    /// Trading date (default: first YYYY-MM-DD in the file name)
    #[arg(long, value_name = "YYYY-MM-DD")]
    date: Option<NaiveDate>,
    #[command(flatten)]
    session: SessionArgs,
    /// Output tape CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Co-occurrence window in milliseconds (sets delta_ns)
    #[arg(long, value_name = "MS", conflicts_with = "delta_ns")]
    delta_ms: Option<i64>,
    /// Co-occurrence window in nanoseconds [key: delta_ns] [default: 500000000]
    #[arg(long, value_name = "NS")]
    delta_ns: Option<i64>,
    /// Direction filters of the first and second symbol, FIRST,SECOND from buy|sell|all [key: directions] [default: all,all]
    #[arg(long, value_name = "FIRST,SECOND")]
    directions: Option<Directions>,
    /// Score measure, count or volume [key: measure] [default: count]
    #[arg(long)]
    measure: Option<Measure>,
}

impl WindowArgs {
    fn resolve(&self, s: &mut Settings) -> Result<CooccurParams> {
        let flag = match self.delta_ms {
            Some(ms) => Some(
                ms.checked_mul(1_000_000)
                    .ok_or_else(|| validation("--delta-ms is too large"))?,
            ),
            None => self.delta_ns,
        };
        let delta_ns = s.pick("delta_ns", flag, DEFAULT_DELTA_NS)?;
        if delta_ns <= 0 {
            return Err(validation(format!("delta_ns must be positive, got {delta_ns}")));
        }
        Ok(CooccurParams {
            delta_ns,
            directions: s.pick("directions", self.directions, Directions::default())?,
            measure: s.pick("measure", self.measure, Measure::Count)?,
        })
    }
}

#[derive(Debug, Args)]
struct CooccurArgs {
    /// Trade tape CSV of one day
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Trading date (default: first YYYY-MM-DD in the file name)
    #[arg(long, value_name = "YYYY-MM-DD")]
    date: Option<NaiveDate>,
    /// Ticker list, one per line, fixing row order and including symbols without trades
    #[arg(long, value_name = "FILE")]
    universe: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    /// Output matrix CSV; the sidecar is written next to it with a .json extension
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Matrix CSVs with sidecars, built with identical settings
    #[arg(required = true, value_name = "MATRIX")]
    inputs: Vec<PathBuf>,
    /// Output matrix CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatrixOut {
    /// Matrix CSV
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output edge list CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[command(flatten)]
    io: MatrixOut,
    /// Fraction of off-diagonal pairs to keep, in (0, 1] [key: fraction] [default: 0.01]
    #[arg(long)]
    fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct CentralityArgs {
    /// Matrix CSV
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Power-iteration tolerance [key: centrality_tol] [default: 1e-10]
    #[arg(long)]
    tol: Option<f64>,
    /// Power-iteration limit [key: centrality_max_iter] [default: 10000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output CSV of scores
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetaArgs {
    /// Matrix CSV
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Sector file, ticker,sector
    #[arg(long, value_name = "FILE")]
    sectors: PathBuf,
    /// Output sector matrix CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Matrix CSV
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Number of clusters [key: clusters] [default: 5]
    #[arg(long)]
    clusters: Option<usize>,
    /// k-means seed [key: seed] [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output partition CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AriArgs {
    /// Reference partition CSV
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Daily partition CSVs named with their YYYY-MM-DD date
    #[arg(required = true, value_name = "PARTITION")]
    partitions: Vec<PathBuf>,
    /// Output series CSV; the summary goes to <stem>.summary.json
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    /// Daily partition CSVs named with their YYYY-MM-DD date
    #[arg(required = true, value_name = "PARTITION")]
    partitions: Vec<PathBuf>,
    /// Output date-by-date matrix CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RegimesArgs {
    /// ARI heatmap CSV
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Number of regimes [key: regimes] [default: 3]
    #[arg(long)]
    regimes: Option<usize>,
    /// k-means seed [key: seed] [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV, date,regime
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Sampling interval in seconds; must divide the session [key: sampling_sec] [default: 300]
    #[arg(long, value_name = "SEC")]
    sampling_sec: Option<i64>,
    /// Symbols without a quote at a grid point: backfill or strict [key: snap] [default: backfill]
    #[arg(long)]
    snap: Option<Snap>,
}

impl GridArgs {
    fn resolve(&self, s: &mut Settings) -> Result<RcovParams> {
        let bounds = self.session.resolve(s)?;
        let sampling_sec = s.pick("sampling_sec", self.sampling_sec, 300)?;
        if sampling_sec <= 0 {
            return Err(validation(format!("sampling_sec must be positive, got {sampling_sec}")));
        }
        Ok(RcovParams {
            bounds,
            sampling_ns: sampling_sec * NANOS_PER_SEC,
            snap: s.pick("snap", self.snap, Snap(SnapPolicy::Backfill))?.0,
        })
    }
}

#[derive(Debug, Args)]
struct RcovArgs {
    /// Quote CSV of one day, timestamp_ns,symbol,mid
    #[arg(long, value_name = "FILE")]
    quotes: PathBuf,
    /// Trading date (default: first YYYY-MM-DD in the file name)
    #[arg(long, value_name = "YYYY-MM-DD")]
    date: Option<NaiveDate>,
    /// Ticker list, one per line, fixing row order
    #[arg(long, value_name = "FILE")]
    universe: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Output covariance CSV; the sidecar is written next to it with a .json extension
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Realized covariance CSV with sidecar
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Partition CSV defining the blocks
    #[arg(long, value_name = "FILE")]
    partition: PathBuf,
    /// Number of latent factors [key: factors] [default: 1]
    #[arg(long)]
    factors: Option<usize>,
    /// Output covariance CSV; the sidecar is written next to it with a .json extension
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PermutationArgs {
    /// Permutations per day [key: n_perm] [default: 2000]
    #[arg(long)]
    n_perm: Option<usize>,
    /// Fit an intercept, true or false [key: intercept] [default: true]
    #[arg(long, value_name = "BOOL")]
    intercept: Option<bool>,
    /// Two-sided p-values instead of upper-tail, true or false [key: two_sided] [default: false]
    #[arg(long, value_name = "BOOL")]
    two_sided: Option<bool>,
}

impl PermutationArgs {
    fn resolve(&self, s: &mut Settings, seed: u64) -> Result<RegressParams> {
        let n_perm = s.pick("n_perm", self.n_perm, DEFAULT_PERMUTATIONS)?;
        if n_perm == 0 {
            return Err(validation("n_perm must be at least 1"));
        }
        Ok(RegressParams {
            n_perm,
            seed,
            intercept: s.pick("intercept", self.intercept, true)?,
            two_sided: s.pick("two_sided", self.two_sided, false)?,
        })
    }
}

#[derive(Debug, Args)]
struct RegressArgs {
    /// Daily covariance CSVs (response), with sidecars
    #[arg(long, required = true, num_args = 1.., value_name = "FILE")]
    covariances: Vec<PathBuf>,
    /// Daily co-trading matrix CSVs, with sidecars, one per covariance date
    #[arg(long, required = true, num_args = 1.., value_name = "FILE")]
    matrices: Vec<PathBuf>,
    /// Sector file, ticker,sector; adds the same-sector control (MRQAP)
    #[arg(long, value_name = "FILE")]
    sectors: Option<PathBuf>,
    #[command(flatten)]
    permutations: PermutationArgs,
    /// Permutation seed [key: seed] [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV of daily coefficients; the summary goes to <stem>.summary.json
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PortfolioArgs {
    /// Gross leverage bound, a number ≥ 1 or inf [key: leverage] [default: inf]
    #[arg(long)]
    leverage: Option<Leverage>,
    /// Skip days whose estimate has a larger condition number [key: cond_limit] [default: 1e9]
    #[arg(long)]
    cond_limit: Option<f64>,
}

impl PortfolioArgs {
    fn resolve(&self, s: &mut Settings) -> Result<BacktestParams> {
        let cond_limit = s.pick("cond_limit", self.cond_limit, DEFAULT_COND_LIMIT)?;
        if !(cond_limit >= 1.0) {
            return Err(validation(format!("cond_limit must be at least 1, got {cond_limit}")));
        }
        Ok(BacktestParams {
            leverage: s.pick("leverage", self.leverage, Leverage::Unbounded)?,
            cond_limit,
        })
    }
}

#[derive(Debug, Args)]
struct BacktestArgs {
    /// Daily covariance estimate CSVs, with sidecars
    #[arg(long, required = true, num_args = 1.., value_name = "FILE")]
    estimates: Vec<PathBuf>,
    /// Daily returns CSV, date,<tickers>
    #[arg(long, value_name = "FILE")]
    returns: PathBuf,
    #[command(flatten)]
    portfolio: PortfolioArgs,
    /// Output directory for report.json, daily.csv and weights.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WorldArgs {
    /// Number of symbols [key: symbols] [default: 50]
    #[arg(long)]
    symbols: Option<usize>,
    /// Number of planted clusters [key: clusters] [default: 5]
    #[arg(long)]
    clusters: Option<usize>,
    /// Planted cluster sizes, comma-separated, or even [key: cluster_sizes] [default: even]
    #[arg(long, value_name = "SIZES")]
    cluster_sizes: Option<Sizes>,
    /// Number of weekdays [key: days] [synth default: 1, pipeline default: 20]
    #[arg(long)]
    days: Option<usize>,
    /// First date; weekends are skipped [key: start_date] [default: 2024-01-02]
    #[arg(long, value_name = "YYYY-MM-DD")]
    start_date: Option<NaiveDate>,
    /// Bursts per hour per cluster [key: burst_rate] [default: 60]
    #[arg(long)]
    burst_rate: Option<f64>,
    /// Background trades per hour per symbol [key: background_rate] [default: 600]
    #[arg(long)]
    background_rate: Option<f64>,
    /// Full width of burst jitter in nanoseconds [key: jitter_ns] [default: 200000000]
    #[arg(long, value_name = "NS")]
    jitter_ns: Option<i64>,
    /// Latent factors in the return model [key: factors] [default: 2]
    #[arg(long)]
    factors: Option<usize>,
    /// Per-interval factor volatility [key: factor_vol] [default: 0.001]
    #[arg(long)]
    factor_vol: Option<f64>,
    /// Per-interval idiosyncratic volatility [key: idio_vol] [default: 0.001]
    #[arg(long)]
    idio_vol: Option<f64>,
    /// Idiosyncratic correlation inside a cluster [key: block_correlation] [default: 0.3]
    #[arg(long)]
    block_correlation: Option<f64>,
    /// Seed [key: seed] [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

impl WorldArgs {
    /// Resolves everything except the session, window and sampling, which
    /// the caller fills in.
    fn resolve(&self, s: &mut Settings, default_days: usize) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        Ok(SynthConfig {
            n_symbols: s.pick("symbols", self.symbols, d.n_symbols)?,
            n_clusters: s.pick("clusters", self.clusters, d.n_clusters)?,
            cluster_sizes: s.pick("cluster_sizes", self.cluster_sizes.clone(), Sizes(None))?.0,
            days: s.pick("days", self.days, default_days)?,
            start_date: s.pick("start_date", self.start_date, d.start_date)?,
            burst_rate_per_hour: s.pick("burst_rate", self.burst_rate, d.burst_rate_per_hour)?,
            background_rate_per_hour: s.pick("background_rate", self.background_rate, d.background_rate_per_hour)?,
            jitter_ns: s.pick("jitter_ns", self.jitter_ns, d.jitter_ns)?,
            n_factors: s.pick("factors", self.factors, d.n_factors)?,
            factor_vol: s.pick("factor_vol", self.factor_vol, d.factor_vol)?,
            idio_vol: s.pick("idio_vol", self.idio_vol, d.idio_vol)?,
            block_correlation: s.pick("block_correlation", self.block_correlation, d.block_correlation)?,
            seed: s.pick("seed", self.seed, d.seed)?,
            ..d
        })
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    session: SessionArgs,
    /// Window the burst jitter must stay below, in nanoseconds [key: delta_ns] [default: 500000000]
    #[arg(long, value_name = "NS")]
    delta_ns: Option<i64>,
    /// Quote sampling interval in seconds [key: sampling_sec] [default: 300]
    #[arg(long, value_name = "SEC")]
    sampling_sec: Option<i64>,
    /// Output directory
    #[arg(long, alias = "out-dir", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    permutations: PermutationArgs,
    #[command(flatten)]
    portfolio: PortfolioArgs,
    /// Output directory
    #[arg(long, alias = "out-dir", value_name = "DIR")]
    out: PathBuf,
}

/// `<stem>.manifest.json` beside a single-file output.
fn manifest_beside(out: &Path) -> PathBuf {
    commands::sibling(out, "manifest.json")
}

fn universe(path: &Option<PathBuf>, run: &mut Run) -> Result<Option<Vec<String>>> {
    path.as_deref().map(|p| commands::read_universe(p, run)).transpose()
}

fn lobster_ticker(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    stem.split('_').next().filter(|t| !t.is_empty()).map(str::to_string)
}

fn dispatch(command: Command, s: &mut Settings, config: Option<&Path>) -> Result<()> {
    let mut run = Run::default();
    if let Some(path) = config {
        run.read(path);
    }
    let (name, manifest) = match command {
        Command::Ingest(a) => {
            let day = commands::date_or_name(a.date, &a.input)?;
            let bounds = a.session.resolve(s)?;
            let ticker = a.ticker.clone().or_else(|| match a.format {
                EventFormat::Lobster => lobster_ticker(&a.input),
                EventFormat::Normalized => None,
            });
            let trades = commands::ingest(&a.input, a.format, ticker.as_deref(), day, bounds, &a.out, &mut run)?;
            log::info!("{trades} trades written to {}", a.out.display());
            ("ingest", manifest_beside(&a.out))
        }
        Command::Cooccur(a) => {
            let day = commands::date_or_name(a.date, &a.input)?;
            let params = a.window.resolve(s)?;
            let universe = universe(&a.universe, &mut run)?;
            commands::cooccur(&a.input, day, universe.as_deref(), &params, &a.out, &mut run)?;
            ("cooccur", manifest_beside(&a.out))
        }
        Command::Aggregate(a) => {
            commands::aggregate(&a.inputs, &a.out, &mut run)?;
            ("aggregate", manifest_beside(&a.out))
        }
        Command::Mst(a) => {
            commands::mst(&a.input, &a.out, &mut run)?;
            ("mst", manifest_beside(&a.out))
        }
        Command::Threshold(a) => {
            let fraction = s.pick("fraction", a.fraction, 0.01)?;
            commands::threshold(&a.io.input, fraction, &a.io.out, &mut run)?;
            ("threshold", manifest_beside(&a.io.out))
        }
        Command::Centrality(a) => {
            let tol = s.pick("centrality_tol", a.tol, DEFAULT_CENTRALITY_TOL)?;
            let max_iter = s.pick("centrality_max_iter", a.max_iter, DEFAULT_CENTRALITY_MAX_ITER)?;
            commands::centrality(&a.input, tol, max_iter, &a.out, &mut run)?;
            ("centrality", manifest_beside(&a.out))
        }
        Command::Meta(a) => {
            commands::meta(&a.input, &a.sectors, &a.out, &mut run)?;
            ("meta", manifest_beside(&a.out))
        }
        Command::Cluster(a) => {
            let k = s.pick("clusters", a.clusters, 5)?;
            let seed = s.pick("seed", a.seed, 0)?;
            commands::cluster(&a.input, k, seed, &a.out, &mut run)?;
            ("cluster", manifest_beside(&a.out))
        }
        Command::Ari(a) => {
            let (_, summary) = commands::ari(&a.reference, &a.partitions, &a.out, &mut run)?;
            log::info!("mean ARI {:.4}", summary.mean);
            ("ari", manifest_beside(&a.out))
        }
        Command::Heatmap(a) => {
            commands::heatmap(&a.partitions, &a.out, &mut run)?;
            ("heatmap", manifest_beside(&a.out))
        }
        Command::Regimes(a) => {
            let k = s.pick("regimes", a.regimes, 3)?;
            let seed = s.pick("seed", a.seed, 0)?;
            commands::regimes(&a.input, k, seed, &a.out, &mut run)?;
            ("regimes", manifest_beside(&a.out))
        }
        Command::Rcov(a) => {
            let day = commands::date_or_name(a.date, &a.quotes)?;
            let params = a.grid.resolve(s)?;
            let universe = universe(&a.universe, &mut run)?;
            commands::rcov(&a.quotes, day, universe.as_deref(), &params, &a.out, &mut run)?;
            ("rcov", manifest_beside(&a.out))
        }
        Command::Estimate(a) => {
            let factors = s.pick("factors", a.factors, 1)?;
            commands::estimate(&a.input, &a.partition, factors, &a.out, &mut run)?;
            ("estimate", manifest_beside(&a.out))
        }
        Command::Regress(a) => {
            let seed = s.pick("seed", a.seed, 0)?;
            let params = a.permutations.resolve(s, seed)?;
            commands::regress(
                &a.covariances,
                &a.matrices,
                a.sectors.as_deref(),
                &params,
                &a.out,
                &mut run,
            )?;
            ("regress", manifest_beside(&a.out))
        }
        Command::Backtest(a) => {
            let params = a.portfolio.resolve(s)?;
            let report = commands::backtest(&a.estimates, &a.returns, &params, &a.out, &mut run)?;
            log::info!(
                "annualized volatility {:.4}, Sharpe {:.3}",
                report.ann_vol,
                report.sharpe
            );
            ("backtest", a.out.join("manifest.json"))
        }
        Command::Synth(a) => {
            let mut config = a.world.resolve(s, 1)?;
            config.session = a.session.resolve(s)?;
            config.delta_ns = s.pick("delta_ns", a.delta_ns, DEFAULT_DELTA_NS)?;
            config.sampling_ns = s.pick("sampling_sec", a.sampling_sec, 300)? * NANOS_PER_SEC;
            config.validate()?;
            commands::synth(&config, &a.out, &mut run)?;
            ("synth", a.out.join("manifest.json"))
        }
        Command::Pipeline(a) => {
            let mut synth = a.world.resolve(s, 20)?;
            let cooccur = a.window.resolve(s)?;
            let rcov = a.grid.resolve(s)?;
            synth.session = rcov.bounds;
            synth.delta_ns = cooccur.delta_ns;
            synth.sampling_ns = rcov.sampling_ns;
            synth.validate()?;
            let regress = a.permutations.resolve(s, synth.seed)?;
            let params = pipeline::PipelineParams {
                clusters: synth.n_clusters,
                factors: synth.n_factors,
                synth,
                cooccur,
                rcov,
                regress,
                backtest: a.portfolio.resolve(s)?,
            };
            let summary = pipeline::run_pipeline(&params, &a.out, &mut run)?;
            commands::save(&a.out.join("summary.json"), &commands::json_bytes(&summary)?, &mut run)?;
            log::info!("mean ARI vs planted {:.4}", summary.ari_vs_planted);
            ("pipeline", a.out.join("manifest.json"))
        }
    };
    run.write_manifest(&manifest, name, s.resolved())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut settings = Settings::load(cli.config.as_deref())?;
    dispatch(cli.command, &mut settings, cli.config.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
