//! CSV and JSON interchange formats.
//!
//! | artefact | layout |
//! |---|---|
//! | trade tape | `timestamp_ns,symbol,direction,quantity`, direction `B`/`S` |
//! | quotes | `timestamp_ns,symbol,mid` |
//! | matrix | header `ticker,<t₁>,…`, one row per ticker |
//! | edge list | `src_ticker,dst_ticker,weight` |
//! | centrality | `ticker,score`, descending |
//! | partition | `ticker,cluster_id` |
//! | sectors | `ticker,sector` |
//! | ARI series | `date,ari` |
//! | regimes | `date,regime` |
//! | panel of daily returns | header `date,<t₁>,…`, one row per date |
//! | regressions | `date,gamma_C,p_C,gamma_S,p_S` |
//! | backtest path | `date,return,cumulative` |
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! value read back is bit-identical to the one written.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{AriSeries, Partition};
use crate::cooccurrence::{CoTradingMatrix, DirectionFilter, Measure};
use crate::covariance::{CovarianceEstimate, CovarianceKind};
use crate::error::{invalid, Error, Result};
use crate::graph_analysis::EdgeList;
use crate::network_regression::RegressionResult;
use crate::portfolio::BacktestReport;
use crate::stats::flagged_f64;
use crate::trade_model::{Side, SymbolTable, Trade, TradeTape};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_err(record: &csv::StringRecord, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line_of(record),
        message: message.into(),
    }
}

fn field<'a>(record: &'a csv::StringRecord, index: usize, name: &str) -> Result<&'a str> {
    record
        .get(index)
        .ok_or_else(|| parse_err(record, format!("missing column {name}")))
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, index: usize, name: &str) -> Result<T> {
    let text = field(record, index, name)?;
    text.parse()
        .map_err(|_| parse_err(record, format!("bad {name} {text:?}")))
}

fn parse_date(record: &csv::StringRecord, index: usize) -> Result<NaiveDate> {
    let text = field(record, index, "date")?;
    NaiveDate::parse_from_str(text, DATE_FORMAT).map_err(|_| parse_err(record, format!("bad date {text:?}")))
}

fn expect_header(records: &mut csv::StringRecordsIter<'_, impl Read>, columns: &[&str]) -> Result<()> {
    let header = records.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    let found: Vec<&str> = header.iter().collect();
    if found != columns {
        return Err(parse_err(
            &header,
            format!("expected header {}, found {}", columns.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn ticker_of(symbols: &SymbolTable, id: usize) -> Result<&str> {
    symbols
        .ticker(id)
        .ok_or_else(|| invalid(format!("symbol id {id} not in the symbol table")))
}

fn fmt_date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

const TAPE_COLUMNS: [&str; 4] = ["timestamp_ns", "symbol", "direction", "quantity"];

/// All tapes of one day in one file, ordered by timestamp, then symbol id,
/// then side.
pub fn write_tapes<W: Write>(w: W, tapes: &[TradeTape], symbols: &SymbolTable) -> Result<()> {
    let mut rows: Vec<&Trade> = tapes.iter().flat_map(|t| t.trades()).collect();
    rows.sort_by_key(|t| (t.timestamp_ns, t.symbol, t.side));
    let mut out = writer(w);
    out.write_record(TAPE_COLUMNS)?;
    for t in rows {
        out.write_record([
            t.timestamp_ns.to_string().as_str(),
            ticker_of(symbols, t.symbol)?,
            &t.side.code().to_string(),
            &t.quantity.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One tape per symbol of `symbols` after reading (new tickers are
/// interned), in id order; symbols without trades get empty tapes.
pub fn read_tapes<R: Read>(r: R, symbols: &mut SymbolTable, day: NaiveDate) -> Result<Vec<TradeTape>> {
    let mut csv = reader(r);
    let mut records = csv.records();
    expect_header(&mut records, &TAPE_COLUMNS)?;
    let mut by_symbol: BTreeMap<usize, Vec<Trade>> = BTreeMap::new();
    for record in records {
        let record = record?;
        let timestamp_ns: i64 = parse_field(&record, 0, "timestamp_ns")?;
        let ticker = field(&record, 1, "symbol")?;
        if ticker.is_empty() {
            return Err(parse_err(&record, "empty symbol"));
        }
        let side: Side = parse_field(&record, 2, "direction")?;
        let quantity: u64 = parse_field(&record, 3, "quantity")?;
        if quantity == 0 {
            return Err(parse_err(&record, "zero quantity"));
        }
        let symbol = symbols.intern(ticker);
        by_symbol.entry(symbol).or_default().push(Trade {
            timestamp_ns,
            symbol,
            side,
            quantity,
        });
    }
    (0..symbols.len())
        .map(|id| match by_symbol.remove(&id) {
            Some(trades) => TradeTape::from_unsorted(id, day, trades),
            None => Ok(TradeTape::empty(id, day)),
        })
        .collect()
}

const QUOTE_COLUMNS: [&str; 3] = ["timestamp_ns", "symbol", "mid"];

/// `series[i]` holds `(timestamp_ns, mid)` for symbol id `i`.
pub fn write_quotes<W: Write>(w: W, series: &[Vec<(i64, f64)>], symbols: &SymbolTable) -> Result<()> {
    let mut rows: Vec<(i64, usize, f64)> = series
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&(t, p)| (t, i, p)))
        .collect();
    rows.sort_by_key(|&(t, i, _)| (t, i));
    let mut out = writer(w);
    out.write_record(QUOTE_COLUMNS)?;
    for (t, i, p) in rows {
        out.write_record([t.to_string().as_str(), ticker_of(symbols, i)?, &p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Quotes per symbol id, each series sorted by timestamp.
pub fn read_quotes<R: Read>(r: R, symbols: &mut SymbolTable) -> Result<Vec<Vec<(i64, f64)>>> {
    let mut csv = reader(r);
    let mut records = csv.records();
    expect_header(&mut records, &QUOTE_COLUMNS)?;
    let mut series: Vec<Vec<(i64, f64)>> = vec![Vec::new(); symbols.len()];
    for record in records {
        let record = record?;
        let t: i64 = parse_field(&record, 0, "timestamp_ns")?;
        let ticker = field(&record, 1, "symbol")?;
        let mid: f64 = parse_field(&record, 2, "mid")?;
        if !(mid > 0.0) || !mid.is_finite() {
            return Err(parse_err(&record, format!("mid price must be positive, got {mid}")));
        }
        let id = symbols.intern(ticker);
        if id >= series.len() {
            series.resize(id + 1, Vec::new());
        }
        series[id].push((t, mid));
    }
    series.resize(symbols.len(), Vec::new());
    for s in &mut series {
        s.sort_by_key(|&(t, _)| t);
    }
    Ok(series)
}

/// Square matrix with `corner` as the top-left header cell.
pub fn write_labeled_matrix<W: Write>(w: W, corner: &str, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != labels.len() || m.ncols() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}×{0} matrix", labels.len()),
            found: format!("{:?}", m.shape()),
        });
    }
    let mut out = writer(w);
    let mut header = vec![corner.to_string()];
    header.extend(labels.iter().cloned());
    out.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labeled_matrix<R: Read>(r: R) -> Result<(String, Vec<String>, DMatrix<f64>)> {
    let mut csv = reader(r);
    let mut records = csv.records();
    let header = records.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    let corner = header.get(0).unwrap_or_default().to_string();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = labels.len();
    let mut values = DMatrix::zeros(n, n);
    let mut rows = 0;
    for record in records {
        let record = record?;
        if rows == n {
            return Err(parse_err(&record, "more rows than header columns"));
        }
        if record.len() != n + 1 {
            return Err(parse_err(
                &record,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        if record.get(0) != Some(labels[rows].as_str()) {
            return Err(parse_err(
                &record,
                format!(
                    "row label {:?} does not match column {:?}",
                    record.get(0).unwrap_or(""),
                    labels[rows]
                ),
            ));
        }
        for j in 0..n {
            values[(rows, j)] = parse_field(&record, j + 1, "value")?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} rows"),
            found: rows.to_string(),
        });
    }
    Ok((corner, labels, values))
}

/// Sidecar of a co-trading matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub delta_ns: i64,
    pub directions: [DirectionFilter; 2],
    pub measure: Measure,
    pub period: String,
}

impl MatrixMeta {
    pub fn of(m: &CoTradingMatrix) -> Self {
        MatrixMeta {
            delta_ns: m.delta_ns,
            directions: [m.directions.0, m.directions.1],
            measure: m.measure,
            period: m.label.clone(),
        }
    }
}

pub fn write_cotrading_matrix<W: Write, J: Write>(
    csv_out: W,
    json_out: J,
    m: &CoTradingMatrix,
    symbols: &SymbolTable,
) -> Result<()> {
    let labels = m
        .symbols
        .iter()
        .map(|&id| ticker_of(symbols, id).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    write_labeled_matrix(csv_out, "ticker", &labels, &m.values)?;
    write_json(json_out, &MatrixMeta::of(m))
}

/// Reads a matrix and its sidecar; tickers are interned into `symbols`.
pub fn read_cotrading_matrix<R: Read, J: Read>(
    csv_in: R,
    json_in: J,
    symbols: &mut SymbolTable,
) -> Result<CoTradingMatrix> {
    let (_, labels, values) = read_labeled_matrix(csv_in)?;
    let meta: MatrixMeta = serde_json::from_reader(json_in)?;
    Ok(CoTradingMatrix {
        label: meta.period,
        symbols: labels.iter().map(|t| symbols.intern(t)).collect(),
        values,
        delta_ns: meta.delta_ns,
        directions: (meta.directions[0], meta.directions[1]),
        measure: meta.measure,
    })
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_edges<W: Write>(w: W, edges: &EdgeList, labels: &[String]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["src_ticker", "dst_ticker", "weight"])?;
    for e in &edges.edges {
        let name = |i: usize| {
            labels
                .get(i)
                .map(String::as_str)
                .ok_or_else(|| invalid(format!("edge endpoint {i} has no label")))
        };
        out.write_record([name(e.i)?, name(e.j)?, &e.weight.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `ticker,score` sorted by descending score, ties by input order.
pub fn write_centrality<W: Write>(w: W, scores: &DVector<f64>, labels: &[String]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} scores", labels.len()),
            found: scores.len().to_string(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = writer(w);
    out.write_record(["ticker", "score"])?;
    for i in order {
        out.write_record([labels[i].as_str(), &scores[i].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_partition<W: Write>(w: W, partition: &Partition, labels: &[String]) -> Result<()> {
    if partition.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", partition.len()),
            found: labels.len().to_string(),
        });
    }
    let mut out = writer(w);
    out.write_record(["ticker", "cluster_id"])?;
    for (label, c) in labels.iter().zip(&partition.assignments) {
        out.write_record([label.as_str(), &c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Partition rows in file order with their tickers.
pub fn read_partition<R: Read>(r: R) -> Result<(Vec<String>, Partition)> {
    let mut csv = reader(r);
    let mut records = csv.records();
    expect_header(&mut records, &["ticker", "cluster_id"])?;
    let mut tickers = Vec::new();
    let mut assignments = Vec::new();
    for record in records {
        let record = record?;
        tickers.push(field(&record, 0, "ticker")?.to_string());
        assignments.push(parse_field::<usize>(&record, 1, "cluster_id")?);
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    Ok((tickers, Partition::new(assignments, k)?))
}

/// Reorders a partition read from disk to follow `tickers`.
pub fn align_partition(file_tickers: &[String], partition: &Partition, tickers: &[String]) -> Result<Partition> {
    let index: BTreeMap<&str, usize> = file_tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let assignments = tickers
        .iter()
        .map(|t| {
            index
                .get(t.as_str())
                .map(|&i| partition.assignments[i])
                .ok_or_else(|| invalid(format!("ticker {t} missing from the partition")))
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::new(assignments, partition.k)
}

pub fn write_sectors<W: Write>(w: W, tickers: &[String], sectors: &[String]) -> Result<()> {
    if tickers.len() != sectors.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} sectors", tickers.len()),
            found: sectors.len().to_string(),
        });
    }
    let mut out = writer(w);
    out.write_record(["ticker", "sector"])?;
    for (t, s) in tickers.iter().zip(sectors) {
        out.write_record([t, s])?;
    }
    out.flush()?;
    Ok(())
}

/// `(ticker, sector)` rows in file order.
pub fn read_sectors<R: Read>(r: R) -> Result<Vec<(String, String)>> {
    let mut csv = reader(r);
    let mut records = csv.records();
    expect_header(&mut records, &["ticker", "sector"])?;
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let sector = field(&record, 1, "sector")?;
        if sector.is_empty() {
            return Err(parse_err(&record, "empty sector"));
        }
        rows.push((field(&record, 0, "ticker")?.to_string(), sector.to_string()));
    }
    Ok(rows)
}

/// Regime of each heatmap row: `date,regime`.
pub fn write_regimes<W: Write>(w: W, labels: &[String], regimes: &Partition) -> Result<()> {
    if labels.len() != regimes.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} regimes", labels.len()),
            found: regimes.len().to_string(),
        });
    }
    let mut out = writer(w);
    out.write_record(["date", "regime"])?;
    for (label, r) in labels.iter().zip(&regimes.assignments) {
        out.write_record([label.as_str(), &r.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ari_series<W: Write>(w: W, series: &AriSeries) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["date", "ari"])?;
    for (d, v) in series.dates.iter().zip(&series.values) {
        out.write_record([fmt_date(*d), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ari_series<R: Read>(r: R) -> Result<AriSeries> {
    let mut csv = reader(r);
    let mut records = csv.records();
    expect_header(&mut records, &["date", "ari"])?;
    let mut series = AriSeries {
        dates: Vec::new(),
        values: Vec::new(),
    };
    for record in records {
        let record = record?;
        series.dates.push(parse_date(&record, 0)?);
        series.values.push(parse_field(&record, 1, "ari")?);
    }
    Ok(series)
}

/// Sidecar of a covariance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMeta {
    pub kind: CovarianceKind,
    #[serde(rename = "K_factors")]
    pub k_factors: Option<usize>,
    #[serde(with = "flagged_f64")]
    pub condition_number: f64,
    pub positive_definite: bool,
    pub date: Option<String>,
}

pub fn write_covariance<W: Write, J: Write>(
    csv_out: W,
    json_out: J,
    estimate: &CovarianceEstimate,
    labels: &[String],
    date: Option<NaiveDate>,
) -> Result<()> {
    write_labeled_matrix(csv_out, "ticker", labels, &estimate.matrix)?;
    write_json(
        json_out,
        &CovarianceMeta {
            kind: estimate.kind,
            k_factors: estimate.factors,
            condition_number: estimate.condition_number,
            positive_definite: estimate.positive_definite,
            date: date.map(fmt_date),
        },
    )
}

pub fn read_covariance<R: Read, J: Read>(
    csv_in: R,
    json_in: J,
) -> Result<(Vec<String>, CovarianceEstimate, Option<NaiveDate>)> {
    let (_, labels, matrix) = read_labeled_matrix(csv_in)?;
    let meta: CovarianceMeta = serde_json::from_reader(json_in)?;
    let date = meta
        .date
        .map(|d| NaiveDate::parse_from_str(&d, DATE_FORMAT).map_err(|_| invalid(format!("bad date {d:?}"))))
        .transpose()?;
    Ok((
        labels,
        CovarianceEstimate {
            matrix,
            kind: meta.kind,
            factors: meta.k_factors,
            condition_number: meta.condition_number,
            positive_definite: meta.positive_definite,
        },
        date,
    ))
}

/// One row per date: `date,<ticker>…`.
pub fn write_daily_vectors<W: Write>(w: W, labels: &[String], rows: &[(NaiveDate, DVector<f64>)]) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(labels.iter().cloned());
    out.write_record(&header)?;
    for (d, v) in rows {
        if v.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", labels.len()),
                found: v.len().to_string(),
            });
        }
        let mut row = vec![fmt_date(*d)];
        row.extend(v.iter().map(|x| x.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub type DailyVectors = (Vec<String>, Vec<(NaiveDate, DVector<f64>)>);

pub fn read_daily_vectors<R: Read>(r: R) -> Result<DailyVectors> {
    let mut csv = reader(r);
    let mut records = csv.records();
    let header = records.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    if header.get(0) != Some("date") {
        return Err(parse_err(&header, "first column must be date"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        if record.len() != labels.len() + 1 {
            return Err(parse_err(
                &record,
                format!("expected {} fields, found {}", labels.len() + 1, record.len()),
            ));
        }
        let date = parse_date(&record, 0)?;
        let v = (0..labels.len())
            .map(|j| parse_field(&record, j + 1, "value"))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((date, DVector::from_vec(v)));
    }
    Ok((labels, rows))
}

pub fn write_regressions<W: Write>(w: W, results: &[RegressionResult]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["date", "gamma_C", "p_C", "gamma_S", "p_S"])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in results {
        out.write_record([
            r.date.map(fmt_date).unwrap_or_default(),
            r.gamma_c.to_string(),
            r.p_value_c.to_string(),
            opt(r.gamma_s()),
            opt(r.p_value_s()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_backtest_path<W: Write>(w: W, report: &BacktestReport) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["date", "return", "cumulative"])?;
    for ((d, r), c) in report.dates.iter().zip(&report.daily_returns).zip(&report.cum_path) {
        out.write_record([fmt_date(*d), r.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
