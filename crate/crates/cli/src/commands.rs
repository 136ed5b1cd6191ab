//! File-level steps shared by the subcommands and the pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use cotrade::clustering::{self, AriSummary};
use cotrade::covariance::{self, SnapPolicy};
use cotrade::graph_analysis;
use cotrade::io;
use cotrade::network_regression::{self, RegressionOptions, RegressionSummary, SeededPermutations, Tail};
use cotrade::portfolio::{self, BacktestConfig};
use cotrade::synth::{self, SynthConfig};
use cotrade::trade_model::{self, lobster, SessionBounds};
use cotrade::{
    AriSeries, BacktestReport, CovarianceEstimate, Leverage, Measure, Partition, RegressionResult, SymbolTable,
    TradeTape,
};

use crate::errors::validation;
use crate::manifest::Run;
use crate::values::Directions;

pub fn read_input(path: &Path, run: &mut Run) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    run.read(path);
    Ok(bytes)
}

pub fn save(path: &Path, bytes: &[u8], run: &mut Run) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    run.wrote(path);
    Ok(())
}

fn encode(f: impl FnOnce(&mut Vec<u8>) -> cotrade::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn encode_pair(f: impl FnOnce(&mut Vec<u8>, &mut Vec<u8>) -> cotrade::Result<()>) -> Result<(Vec<u8>, Vec<u8>)> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    f(&mut a, &mut b)?;
    Ok((a, b))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    encode(|buf| io::write_json(buf, value))
}

/// JSON sidecar of a CSV artefact: same path with a `.json` extension.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// `<dir>/<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// First `YYYY-MM-DD` found in the file name.
pub fn date_in_name(path: &Path) -> Option<NaiveDate> {
    let name = path.file_name()?.to_str()?;
    let bytes = name.as_bytes();
    (0..bytes.len().saturating_sub(9)).find_map(|i| {
        let window = name.get(i..i + 10)?;
        NaiveDate::parse_from_str(window, io::DATE_FORMAT).ok()
    })
}

pub fn date_or_name(date: Option<NaiveDate>, path: &Path) -> Result<NaiveDate> {
    date.or_else(|| date_in_name(path)).ok_or_else(|| {
        validation(format!(
            "no --date given and no YYYY-MM-DD in the name of {}",
            path.display()
        ))
    })
}

/// Tickers listed one per line; blank lines and `#` comments are skipped.
pub fn read_universe(path: &Path, run: &mut Run) -> Result<Vec<String>> {
    let text = String::from_utf8(read_input(path, run)?)
        .map_err(|_| validation(format!("{} is not UTF-8", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Universe tickers first, in their order, then any others sorted.
fn ordered_table(universe: Option<&[String]>, found: &[String]) -> Result<SymbolTable> {
    let mut tickers: Vec<String> = universe.map(<[String]>::to_vec).unwrap_or_default();
    let mut extra: Vec<&String> = found.iter().filter(|t| !tickers.contains(t)).collect();
    extra.sort();
    tickers.extend(extra.into_iter().cloned());
    Ok(SymbolTable::from_tickers(tickers)?)
}

fn read_sorted_tapes(
    bytes: &[u8],
    universe: Option<&[String]>,
    day: NaiveDate,
) -> Result<(SymbolTable, Vec<TradeTape>)> {
    let mut scratch = SymbolTable::new();
    io::read_tapes(bytes, &mut scratch, day)?;
    let mut symbols = ordered_table(universe, scratch.tickers())?;
    let tapes = io::read_tapes(bytes, &mut symbols, day)?;
    Ok((symbols, tapes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EventFormat {
    /// CSV with a header timestamp_ns,event_type,size,price,side[,symbol]
    Normalized,
    /// Headerless LOBSTER message file
    Lobster,
}

pub fn ingest(
    input: &Path,
    format: EventFormat,
    ticker: Option<&str>,
    day: NaiveDate,
    bounds: SessionBounds,
    out: &Path,
    run: &mut Run,
) -> Result<usize> {
    let bytes = read_input(input, run)?;
    let mut symbols = SymbolTable::new();
    let tapes = match format {
        EventFormat::Normalized => {
            trade_model::parse_execution_events(bytes.as_slice(), &mut symbols, ticker, day, bounds)?
        }
        EventFormat::Lobster => {
            let events = lobster::read_messages(bytes.as_slice())?;
            trade_model::trades_from_events(&events, &mut symbols, ticker, day, bounds)?
        }
    };
    let trades = tapes.iter().map(TradeTape::len).sum();
    save(out, &encode(|b| io::write_tapes(b, &tapes, &symbols))?, run)?;
    Ok(trades)
}

pub struct CooccurParams {
    pub delta_ns: i64,
    pub directions: Directions,
    pub measure: Measure,
}

pub fn cooccur(
    input: &Path,
    day: NaiveDate,
    universe: Option<&[String]>,
    params: &CooccurParams,
    out: &Path,
    run: &mut Run,
) -> Result<()> {
    let bytes = read_input(input, run)?;
    let (symbols, tapes) = read_sorted_tapes(&bytes, universe, day)?;
    let mut matrix = cotrade::cooccurrence::build_daily_matrix(
        &tapes,
        params.delta_ns,
        (params.directions.0, params.directions.1),
        params.measure,
    )?;
    matrix.label = day.format(io::DATE_FORMAT).to_string();
    let (csv, json) = encode_pair(|c, j| io::write_cotrading_matrix(c, j, &matrix, &symbols))?;
    save(out, &csv, run)?;
    save(&sidecar(out), &json, run)
}

pub fn aggregate(inputs: &[PathBuf], out: &Path, run: &mut Run) -> Result<()> {
    let mut symbols = SymbolTable::new();
    let mut matrices = Vec::with_capacity(inputs.len());
    for path in inputs {
        let csv = read_input(path, run)?;
        let json = read_input(&sidecar(path), run)?;
        matrices.push(io::read_cotrading_matrix(
            csv.as_slice(),
            json.as_slice(),
            &mut symbols,
        )?);
    }
    let mut total = cotrade::cooccurrence::aggregate_matrices(&matrices)?;
    if let (Some(first), Some(last)) = (matrices.first(), matrices.last()) {
        total.label = if matrices.len() == 1 {
            first.label.clone()
        } else {
            format!("{}..{}", first.label, last.label)
        };
    }
    let (csv, json) = encode_pair(|c, j| io::write_cotrading_matrix(c, j, &total, &symbols))?;
    save(out, &csv, run)?;
    save(&sidecar(out), &json, run)
}

pub fn read_matrix(path: &Path, run: &mut Run) -> Result<(Vec<String>, DMatrix<f64>)> {
    let bytes = read_input(path, run)?;
    let (_, labels, m) = io::read_labeled_matrix(bytes.as_slice())?;
    Ok((labels, m))
}

pub fn mst(input: &Path, out: &Path, run: &mut Run) -> Result<()> {
    let (labels, m) = read_matrix(input, run)?;
    let forest = graph_analysis::max_spanning_tree(&m)?;
    if !forest.connected {
        log::warn!("graph has {} components; writing a spanning forest", forest.components);
    }
    save(out, &encode(|b| io::write_edges(b, &forest.edges, &labels))?, run)
}

pub fn threshold(input: &Path, fraction: f64, out: &Path, run: &mut Run) -> Result<()> {
    let (labels, m) = read_matrix(input, run)?;
    let edges = graph_analysis::threshold_top_fraction(&m, fraction)?;
    save(out, &encode(|b| io::write_edges(b, &edges, &labels))?, run)
}

pub fn centrality(input: &Path, tol: f64, max_iter: usize, out: &Path, run: &mut Run) -> Result<()> {
    let (labels, m) = read_matrix(input, run)?;
    let scores = graph_analysis::eigenvector_centrality(&m, tol, max_iter)?;
    save(out, &encode(|b| io::write_centrality(b, &scores, &labels))?, run)
}

pub fn read_sector_map(path: &Path, run: &mut Run) -> Result<BTreeMap<String, String>> {
    let bytes = read_input(path, run)?;
    let mut map = BTreeMap::new();
    for (ticker, sector) in io::read_sectors(bytes.as_slice())? {
        if map.insert(ticker.clone(), sector).is_some() {
            return Err(validation(format!(
                "ticker {ticker} listed twice in {}",
                path.display()
            )));
        }
    }
    Ok(map)
}

fn sectors_for(labels: &[String], map: &BTreeMap<String, String>) -> Result<Vec<String>> {
    labels
        .iter()
        .map(|t| {
            map.get(t)
                .cloned()
                .ok_or_else(|| cotrade::Error::MissingSector(t.clone()).into())
        })
        .collect()
}

pub fn meta(input: &Path, sectors: &Path, out: &Path, run: &mut Run) -> Result<()> {
    let (labels, m) = read_matrix(input, run)?;
    let map = read_sector_map(sectors, run)?;
    let net = graph_analysis::sector_meta_network(&m, &sectors_for(&labels, &map)?)?;
    save(
        out,
        &encode(|b| io::write_labeled_matrix(b, "sector", &net.sectors, &net.values))?,
        run,
    )
}

pub fn cluster(input: &Path, k: usize, seed: u64, out: &Path, run: &mut Run) -> Result<Partition> {
    let (labels, m) = read_matrix(input, run)?;
    let partition = clustering::spectral_clustering(&m, k, seed)?;
    if partition.empty_clusters() > 0 {
        log::warn!(
            "{}: {} of {k} clusters are empty",
            input.display(),
            partition.empty_clusters()
        );
    }
    save(out, &encode(|b| io::write_partition(b, &partition, &labels))?, run)?;
    Ok(partition)
}

pub fn read_partition(path: &Path, run: &mut Run) -> Result<(Vec<String>, Partition)> {
    let bytes = read_input(path, run)?;
    Ok(io::read_partition(bytes.as_slice())?)
}

/// Daily partitions aligned to the tickers of `reference`, with dates taken
/// from the file names.
fn dated_partitions(paths: &[PathBuf], tickers: &[String], run: &mut Run) -> Result<Vec<(NaiveDate, Partition)>> {
    let mut days = paths
        .iter()
        .map(|path| {
            let date = date_or_name(None, path)?;
            let (file_tickers, p) = read_partition(path, run)?;
            Ok((date, io::align_partition(&file_tickers, &p, tickers)?))
        })
        .collect::<Result<Vec<_>>>()?;
    days.sort_by_key(|d| d.0);
    if let Some(w) = days.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(validation(format!("two partitions dated {}", w[0].0)));
    }
    Ok(days)
}

pub fn ari(reference: &Path, partitions: &[PathBuf], out: &Path, run: &mut Run) -> Result<(AriSeries, AriSummary)> {
    let (tickers, reference) = read_partition(reference, run)?;
    let (dates, parts): (Vec<_>, Vec<_>) = dated_partitions(partitions, &tickers, run)?.into_iter().unzip();
    let series = AriSeries::against_reference(dates, &parts, &reference)?;
    let summary = clustering::ari_summary(&series.values)?;
    save(out, &encode(|b| io::write_ari_series(b, &series))?, run)?;
    save(&sibling(out, "summary.json"), &json_bytes(&summary)?, run)?;
    Ok((series, summary))
}

pub fn heatmap(partitions: &[PathBuf], out: &Path, run: &mut Run) -> Result<()> {
    let first = partitions.first().ok_or_else(|| validation("no partitions given"))?;
    let (tickers, _) = read_partition(first, run)?;
    let (dates, parts): (Vec<_>, Vec<_>) = dated_partitions(partitions, &tickers, run)?.into_iter().unzip();
    let heat = clustering::pairwise_ari_heatmap(&parts)?;
    let labels: Vec<String> = dates.iter().map(|d| d.format(io::DATE_FORMAT).to_string()).collect();
    save(
        out,
        &encode(|b| io::write_labeled_matrix(b, "date", &labels, &heat))?,
        run,
    )
}

pub fn regimes(input: &Path, n_regimes: usize, seed: u64, out: &Path, run: &mut Run) -> Result<()> {
    let (labels, heat) = read_matrix(input, run)?;
    let regimes = clustering::detect_regimes(&heat, n_regimes, seed)?;
    save(out, &encode(|b| io::write_regimes(b, &labels, &regimes))?, run)
}

pub struct RcovParams {
    pub bounds: SessionBounds,
    pub sampling_ns: i64,
    pub snap: SnapPolicy,
}

pub fn rcov(
    quotes: &Path,
    day: NaiveDate,
    universe: Option<&[String]>,
    params: &RcovParams,
    out: &Path,
    run: &mut Run,
) -> Result<()> {
    let bytes = read_input(quotes, run)?;
    let mut scratch = SymbolTable::new();
    io::read_quotes(bytes.as_slice(), &mut scratch)?;
    let mut symbols = ordered_table(universe, scratch.tickers())?;
    let series = io::read_quotes(bytes.as_slice(), &mut symbols)?;
    let panel = covariance::grid_log_returns(&series, params.bounds, params.sampling_ns, params.snap)?;
    for &i in &panel.backfilled {
        log::warn!("{day}: {} has no quote at the open; backfilled", symbols.tickers()[i]);
    }
    let estimate = covariance::realized_covariance(&panel)?;
    write_estimate(&estimate, symbols.tickers(), day, out, run)
}

fn write_estimate(
    estimate: &CovarianceEstimate,
    labels: &[String],
    day: NaiveDate,
    out: &Path,
    run: &mut Run,
) -> Result<()> {
    let (csv, json) = encode_pair(|c, j| io::write_covariance(c, j, estimate, labels, Some(day)))?;
    save(out, &csv, run)?;
    save(&sidecar(out), &json, run)
}

pub fn read_estimate(path: &Path, run: &mut Run) -> Result<(Vec<String>, CovarianceEstimate, NaiveDate)> {
    let csv = read_input(path, run)?;
    let json = read_input(&sidecar(path), run)?;
    let (labels, estimate, date) = io::read_covariance(csv.as_slice(), json.as_slice())?;
    Ok((labels, estimate, date_or_name(date, path)?))
}

pub fn estimate(
    input: &Path,
    partition: &Path,
    factors: usize,
    out: &Path,
    run: &mut Run,
) -> Result<CovarianceEstimate> {
    let (labels, realized, day) = read_estimate(input, run)?;
    let (file_tickers, p) = read_partition(partition, run)?;
    let p = io::align_partition(&file_tickers, &p, &labels)?;
    let estimate = covariance::cluster_block_estimate(&realized.matrix, factors, &p)?;
    if !estimate.positive_definite {
        log::warn!("{day}: cluster estimate is not positive definite");
    }
    write_estimate(&estimate, &labels, day, out, run)?;
    Ok(estimate)
}

/// `m` with rows and columns reordered from `from` to `to`.
fn reorder(m: &DMatrix<f64>, from: &[String], to: &[String]) -> Result<DMatrix<f64>> {
    if from.len() != to.len() {
        return Err(cotrade::Error::ShapeMismatch {
            expected: format!("{} tickers", to.len()),
            found: from.len().to_string(),
        }
        .into());
    }
    let index: BTreeMap<&str, usize> = from.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let perm = to
        .iter()
        .map(|t| {
            index
                .get(t.as_str())
                .copied()
                .ok_or_else(|| validation(format!("ticker {t} missing from matrix")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(to.len(), to.len(), |i, j| m[(perm[i], perm[j])]))
}

pub struct RegressParams {
    pub n_perm: usize,
    pub seed: u64,
    pub intercept: bool,
    pub two_sided: bool,
}

pub fn regress(
    covariances: &[PathBuf],
    matrices: &[PathBuf],
    sectors: Option<&Path>,
    params: &RegressParams,
    out: &Path,
    run: &mut Run,
) -> Result<(Vec<RegressionResult>, RegressionSummary)> {
    if covariances.len() != matrices.len() {
        return Err(validation(format!(
            "{} covariance files but {} co-trading matrices",
            covariances.len(),
            matrices.len()
        )));
    }
    let sector_map = sectors.map(|p| read_sector_map(p, run)).transpose()?;
    let mut ys = covariances
        .iter()
        .map(|p| read_estimate(p, run))
        .collect::<Result<Vec<_>>>()?;
    ys.sort_by_key(|y| y.2);
    let mut xs = matrices
        .iter()
        .map(|p| {
            let (labels, m) = read_matrix(p, run)?;
            let json = read_input(&sidecar(p), run)?;
            let meta: io::MatrixMeta = serde_json::from_slice(&json)?;
            let date = NaiveDate::parse_from_str(&meta.period, io::DATE_FORMAT)
                .ok()
                .or_else(|| date_in_name(p))
                .ok_or_else(|| validation(format!("{} has no date", p.display())))?;
            Ok((date, labels, m))
        })
        .collect::<Result<Vec<_>>>()?;
    xs.sort_by_key(|x| x.0);
    let options = RegressionOptions {
        intercept: params.intercept,
        tail: if params.two_sided { Tail::TwoSided } else { Tail::Upper },
    };
    let source = SeededPermutations { seed: params.seed };
    let mut results = Vec::with_capacity(ys.len());
    for ((labels, y, day), (x_day, x_labels, x)) in ys.iter().zip(&xs) {
        if day != x_day {
            return Err(cotrade::Error::DateMismatch(format!("covariance {day} paired with matrix {x_day}")).into());
        }
        let x = reorder(x, x_labels, labels)?;
        let mut result = match &sector_map {
            Some(map) => {
                let s = network_regression::sector_indicator(&sectors_for(labels, map)?);
                network_regression::mrqap_dsp_test_with(&y.matrix, &x, &[s.matrix()], params.n_perm, &source, options)?
            }
            None => network_regression::qap_test_with(&y.matrix, &x, params.n_perm, &source, options)?,
        };
        result.date = Some(*day);
        result.seed = Some(params.seed);
        results.push(result);
    }
    let summary = network_regression::daily_regression_summary(&results)?;
    save(out, &encode(|b| io::write_regressions(b, &results))?, run)?;
    save(&sibling(out, "summary.json"), &json_bytes(&summary)?, run)?;
    Ok((results, summary))
}

pub struct BacktestParams {
    pub leverage: Leverage,
    pub cond_limit: f64,
}

pub fn backtest(
    estimates: &[PathBuf],
    returns: &Path,
    params: &BacktestParams,
    out_dir: &Path,
    run: &mut Run,
) -> Result<BacktestReport> {
    let mut days = estimates
        .iter()
        .map(|p| read_estimate(p, run))
        .collect::<Result<Vec<_>>>()?;
    days.sort_by_key(|d| d.2);
    let labels = days
        .first()
        .map(|d| d.0.clone())
        .ok_or_else(|| validation("no estimates given"))?;
    if let Some(d) = days.iter().find(|d| d.0 != labels) {
        return Err(validation(format!("estimate for {} lists different tickers", d.2)));
    }
    let bytes = read_input(returns, run)?;
    let (return_labels, rows) = io::read_daily_vectors(bytes.as_slice())?;
    let column: BTreeMap<&str, usize> = return_labels.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let order = labels
        .iter()
        .map(|t| {
            column
                .get(t.as_str())
                .copied()
                .ok_or_else(|| validation(format!("no returns for {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let by_date: BTreeMap<NaiveDate, &DVector<f64>> = rows.iter().map(|(d, v)| (*d, v)).collect();
    let aligned = days
        .iter()
        .map(|d| {
            by_date
                .get(&d.2)
                .map(|v| (d.2, DVector::from_iterator(order.len(), order.iter().map(|&k| v[k]))))
                .ok_or_else(|| cotrade::Error::DateMismatch(format!("no returns on {}", d.2)).into())
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<(NaiveDate, CovarianceEstimate)> = days.into_iter().map(|d| (d.2, d.1)).collect();
    let report = portfolio::backtest_with(
        &estimates,
        &aligned,
        &BacktestConfig {
            leverage: params.leverage,
            cond_limit: params.cond_limit,
            ..BacktestConfig::default()
        },
    )?;
    let weights: Vec<(NaiveDate, DVector<f64>)> = report
        .weights
        .iter()
        .filter_map(|w| w.date.map(|d| (d, DVector::from_column_slice(&w.weights))))
        .collect();
    save(&out_dir.join("report.json"), &json_bytes(&report)?, run)?;
    save(
        &out_dir.join("daily.csv"),
        &encode(|b| io::write_backtest_path(b, &report))?,
        run,
    )?;
    save(
        &out_dir.join("weights.csv"),
        &encode(|b| io::write_daily_vectors(b, &labels, &weights))?,
        run,
    )?;
    Ok(report)
}

/// What `synth` wrote, for chaining.
pub struct SynthOutputs {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub tapes: Vec<PathBuf>,
    pub quotes: Vec<PathBuf>,
    pub planted: PathBuf,
    pub sectors: PathBuf,
    pub returns: PathBuf,
}

pub fn synth(config: &SynthConfig, out_dir: &Path, run: &mut Run) -> Result<SynthOutputs> {
    let trades = synth::gen_clustered_trades(config)?;
    let world = synth::gen_factor_returns(config)?;
    let tickers = trades.symbols.tickers().to_vec();
    let name = |d: &NaiveDate| format!("{}.csv", d.format(io::DATE_FORMAT));
    let mut tapes = Vec::new();
    let mut quotes = Vec::new();
    for ((date, day_tapes), panel) in trades.dates.iter().zip(&trades.days).zip(&world.panels) {
        let tape_path = out_dir.join("tapes").join(name(date));
        save(
            &tape_path,
            &encode(|b| io::write_tapes(b, day_tapes, &trades.symbols))?,
            run,
        )?;
        tapes.push(tape_path);
        let series = synth::quotes_from_panel(panel, config.sampling_ns, 100.0);
        let quote_path = out_dir.join("quotes").join(name(date));
        save(
            &quote_path,
            &encode(|b| io::write_quotes(b, &series, &trades.symbols))?,
            run,
        )?;
        quotes.push(quote_path);
    }
    let planted = out_dir.join("planted_partition.csv");
    save(
        &planted,
        &encode(|b| io::write_partition(b, &trades.planted, &tickers))?,
        run,
    )?;
    let sectors = out_dir.join("sectors.csv");
    let sector_labels = trades.symbols.sector_labels()?;
    save(
        &sectors,
        &encode(|b| io::write_sectors(b, &tickers, &sector_labels))?,
        run,
    )?;
    let returns = out_dir.join("returns.csv");
    save(
        &returns,
        &encode(|b| io::write_daily_vectors(b, &tickers, &world.open_close_returns()))?,
        run,
    )?;
    save(
        &out_dir.join("true_covariance.csv"),
        &encode(|b| io::write_labeled_matrix(b, "ticker", &tickers, &world.sigma_daily()))?,
        run,
    )?;
    Ok(SynthOutputs {
        dates: trades.dates,
        tickers,
        tapes,
        quotes,
        planted,
        sectors,
        returns,
    })
}
