//! Trade data model and conversion of raw order-book event files into
//! per-symbol, time-sorted trade tapes.
//!
//! Input rows are normalized execution-event records with the header
//! `timestamp_ns,event_type,size,price,side`, where `side` is the side of the
//! *resting* limit order that was hit. An optional trailing `symbol` column
//! lets a single file carry several symbols. Native LOBSTER message files are
//! mapped onto this schema by [`lobster`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Direction of a trade, from the point of view of the initiating order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    /// Single-letter code used in tape files.
    pub fn code(self) -> char {
        match self {
            Side::Buy => 'B',
            Side::Sell => 'S',
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "B" | "b" | "buy" | "BUY" | "1" => Ok(Side::Buy),
            "S" | "s" | "sell" | "SELL" | "-1" => Ok(Side::Sell),
            other => Err(invalid(format!("unknown side {other:?}"))),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// One executed transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trade {
    /// Nanoseconds since midnight, exchange time.
    pub timestamp_ns: i64,
    /// Index into a [`SymbolTable`].
    pub symbol: usize,
    pub side: Side,
    /// Shares, always positive.
    pub quantity: u64,
}

/// Closed trading-session interval `[open_ns, close_ns]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBounds {
    open_ns: i64,
    close_ns: i64,
}

impl SessionBounds {
    pub fn new(open_ns: i64, close_ns: i64) -> Result<Self> {
        if open_ns >= close_ns {
            return Err(invalid(format!("session open {open_ns} must precede close {close_ns}")));
        }
        Ok(SessionBounds { open_ns, close_ns })
    }

    pub fn open_ns(&self) -> i64 {
        self.open_ns
    }

    pub fn close_ns(&self) -> i64 {
        self.close_ns
    }

    pub fn contains(&self, timestamp_ns: i64) -> bool {
        self.open_ns <= timestamp_ns && timestamp_ns <= self.close_ns
    }

    pub fn length_ns(&self) -> i64 {
        self.close_ns - self.open_ns
    }
}

impl Default for SessionBounds {
    fn default() -> Self {
        SessionBounds {
            open_ns: crate::DEFAULT_OPEN_NS,
            close_ns: crate::DEFAULT_CLOSE_NS,
        }
    }
}

/// All trades of one symbol on one day, sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeTape {
    symbol: usize,
    day: NaiveDate,
    trades: Vec<Trade>,
}

impl TradeTape {
    /// Builds a tape, checking that every trade belongs to `symbol`, has a
    /// positive quantity and that timestamps are non-decreasing.
    pub fn new(symbol: usize, day: NaiveDate, trades: Vec<Trade>) -> Result<Self> {
        for (position, trade) in trades.iter().enumerate() {
            if trade.symbol != symbol {
                return Err(invalid(format!(
                    "trade {position} has symbol {} on the tape of symbol {symbol}",
                    trade.symbol
                )));
            }
            if trade.quantity == 0 {
                return Err(invalid(format!("trade {position} has zero quantity")));
            }
        }
        if let Some(position) = trades.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
            return Err(Error::UnsortedTape {
                symbol,
                position: position + 1,
            });
        }
        Ok(TradeTape { symbol, day, trades })
    }

    /// Sorts and aggregates arbitrary trades of one symbol into a tape.
    pub fn from_unsorted(symbol: usize, day: NaiveDate, trades: Vec<Trade>) -> Result<Self> {
        TradeTape::new(symbol, day, aggregate_trades(trades))
    }

    pub fn empty(symbol: usize, day: NaiveDate) -> Self {
        TradeTape {
            symbol,
            day,
            trades: Vec::new(),
        }
    }

    pub fn symbol(&self) -> usize {
        self.symbol
    }

    pub fn day(&self) -> NaiveDate {
        self.day
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    pub fn total_quantity(&self) -> u128 {
        self.trades.iter().map(|t| t.quantity as u128).sum()
    }

    pub fn into_trades(self) -> Vec<Trade> {
        self.trades
    }
}

/// Bidirectional ticker ↔ dense id map with optional sector labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    tickers: Vec<String>,
    sectors: Vec<Option<String>>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from tickers in id order. Duplicate tickers are rejected.
    pub fn from_tickers<I, S>(tickers: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = SymbolTable::new();
        for ticker in tickers {
            let ticker = ticker.into();
            if table.index.contains_key(&ticker) {
                return Err(invalid(format!("duplicate ticker {ticker}")));
            }
            table.intern(&ticker);
        }
        Ok(table)
    }

    /// Returns the id of `ticker`, inserting it if needed.
    pub fn intern(&mut self, ticker: &str) -> usize {
        if let Some(&id) = self.index.get(ticker) {
            return id;
        }
        let id = self.tickers.len();
        self.tickers.push(ticker.to_string());
        self.sectors.push(None);
        self.index.insert(ticker.to_string(), id);
        id
    }

    pub fn id(&self, ticker: &str) -> Option<usize> {
        self.index.get(ticker).copied()
    }

    pub fn ticker(&self, id: usize) -> Option<&str> {
        self.tickers.get(id).map(String::as_str)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn set_sector(&mut self, id: usize, sector: impl Into<String>) -> Result<()> {
        let slot = self
            .sectors
            .get_mut(id)
            .ok_or_else(|| invalid(format!("unknown symbol id {id}")))?;
        *slot = Some(sector.into());
        Ok(())
    }

    pub fn sector(&self, id: usize) -> Option<&str> {
        self.sectors.get(id).and_then(|s| s.as_deref())
    }

    /// Sector labels for every symbol, failing on the first unlabeled one.
    pub fn sector_labels(&self) -> Result<Vec<String>> {
        self.tickers
            .iter()
            .zip(&self.sectors)
            .map(|(ticker, sector)| sector.clone().ok_or_else(|| Error::MissingSector(ticker.clone())))
            .collect()
    }
}

/// Order-book event category of a normalized row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventType {
    Submission,
    Cancellation,
    Deletion,
    Execution,
    HiddenExecution,
    Cross,
    Halt,
}

impl EventType {
    pub fn is_execution(self) -> bool {
        matches!(self, EventType::Execution | EventType::HiddenExecution)
    }

    /// LOBSTER message type codes 1..=7.
    pub fn from_lobster_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => EventType::Submission,
            2 => EventType::Cancellation,
            3 => EventType::Deletion,
            4 => EventType::Execution,
            5 => EventType::HiddenExecution,
            6 => EventType::Cross,
            7 => EventType::Halt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EventType::Submission => "submission",
            EventType::Cancellation => "cancellation",
            EventType::Deletion => "deletion",
            EventType::Execution => "execution",
            EventType::HiddenExecution => "hidden_execution",
            EventType::Cross => "cross",
            EventType::Halt => "halt",
        }
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return EventType::from_lobster_code(code).ok_or_else(|| invalid(format!("unknown event code {code}")));
        }
        Ok(match s.to_ascii_lowercase().as_str() {
            "submission" => EventType::Submission,
            "cancellation" => EventType::Cancellation,
            "deletion" => EventType::Deletion,
            "execution" => EventType::Execution,
            "hidden_execution" => EventType::HiddenExecution,
            "cross" => EventType::Cross,
            "halt" => EventType::Halt,
            other => return Err(invalid(format!("unknown event type {other:?}"))),
        })
    }
}

/// One normalized order-book event row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub timestamp_ns: i64,
    pub event_type: EventType,
    pub size: u64,
    pub price: f64,
    /// Side of the resting limit order the event refers to.
    pub resting_side: Side,
    pub ticker: Option<String>,
}

/// Trade direction implied by hitting a resting order on `resting_side`.
pub fn initiator_side(resting_side: Side) -> Side {
    resting_side.opposite()
}

/// Sorts trades by `(timestamp, side)` and merges records sharing both into
/// one trade carrying the summed quantity. Idempotent.
pub fn aggregate_trades(mut trades: Vec<Trade>) -> Vec<Trade> {
    trades.sort_by_key(|t| (t.timestamp_ns, t.side));
    let mut out: Vec<Trade> = Vec::with_capacity(trades.len());
    for trade in trades {
        match out.last_mut() {
            Some(last)
                if last.timestamp_ns == trade.timestamp_ns
                    && last.side == trade.side
                    && last.symbol == trade.symbol =>
            {
                last.quantity += trade.quantity;
            }
            _ => out.push(trade),
        }
    }
    out
}

/// Retains trades inside the closed session interval, preserving order.
pub fn filter_session(tape: &TradeTape, bounds: SessionBounds) -> TradeTape {
    TradeTape {
        symbol: tape.symbol,
        day: tape.day,
        trades: tape
            .trades
            .iter()
            .filter(|t| bounds.contains(t.timestamp_ns))
            .copied()
            .collect(),
    }
}

const EVENT_COLUMNS: [&str; 5] = ["timestamp_ns", "event_type", "size", "price", "side"];

/// Reads normalized event rows. Line numbers in errors are 1-based file lines.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = csv.records();
    let header = match rows.next() {
        None => return Ok(Vec::new()),
        Some(record) => record?,
    };
    let names: Vec<&str> = header.iter().collect();
    let has_symbol = match names.as_slice() {
        [a, b, c, d, e] if [*a, *b, *c, *d, *e] == EVENT_COLUMNS => false,
        [a, b, c, d, e, "symbol"] if [*a, *b, *c, *d, *e] == EVENT_COLUMNS => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header {} [,symbol], found {:?}",
                    EVENT_COLUMNS.join(","),
                    names
                ),
            })
        }
    };
    let width = if has_symbol { 6 } else { 5 };

    let mut events = Vec::new();
    for (offset, record) in rows.enumerate() {
        let line = offset as u64 + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let fail = |message: String| Error::Parse { line, message };
        let timestamp_ns = record[0]
            .parse::<i64>()
            .map_err(|e| fail(format!("timestamp_ns: {e}")))?;
        let event_type = record[1].parse::<EventType>().map_err(|e| fail(e.to_string()))?;
        let size = record[2].parse::<u64>().map_err(|e| fail(format!("size: {e}")))?;
        let price = record[3].parse::<f64>().map_err(|e| fail(format!("price: {e}")))?;
        let resting_side = record[4].parse::<Side>().map_err(|e| fail(e.to_string()))?;
        let ticker = has_symbol.then(|| record[5].to_string());
        events.push(RawEvent {
            timestamp_ns,
            event_type,
            size,
            price,
            resting_side,
            ticker,
        });
    }
    Ok(events)
}

/// Converts events into trade tapes: keeps executions inside `bounds`, flips
/// the resting side into the trade direction and aggregates same-timestamp,
/// same-direction records.
///
/// Rows without a `symbol` column are attributed to `default_ticker`.
/// Returned tapes are ordered by symbol id.
pub fn trades_from_events(
    events: &[RawEvent],
    symbols: &mut SymbolTable,
    default_ticker: Option<&str>,
    day: NaiveDate,
    bounds: SessionBounds,
) -> Result<Vec<TradeTape>> {
    let mut by_symbol: BTreeMap<usize, Vec<Trade>> = BTreeMap::new();
    for event in events.iter().filter(|e| e.event_type.is_execution()) {
        if event.size == 0 {
            continue;
        }
        let ticker = event
            .ticker
            .as_deref()
            .or(default_ticker)
            .ok_or_else(|| invalid("event file has no symbol column and no ticker was given"))?;
        let symbol = symbols.intern(ticker);
        by_symbol.entry(symbol).or_default().push(Trade {
            timestamp_ns: event.timestamp_ns,
            symbol,
            side: initiator_side(event.resting_side),
            quantity: event.size,
        });
    }
    by_symbol
        .into_iter()
        .map(|(symbol, trades)| {
            let tape = TradeTape::from_unsorted(symbol, day, trades)?;
            Ok(filter_session(&tape, bounds))
        })
        .collect()
}

/// Parses a normalized event file straight into trade tapes.
pub fn parse_execution_events<R: Read>(
    reader: R,
    symbols: &mut SymbolTable,
    default_ticker: Option<&str>,
    day: NaiveDate,
    bounds: SessionBounds,
) -> Result<Vec<TradeTape>> {
    let events = read_events(reader)?;
    trades_from_events(&events, symbols, default_ticker, day, bounds)
}

/// Adapter for native LOBSTER message files
/// (`time,type,order_id,size,price,direction`, no header, time in decimal
/// seconds after midnight, direction `1` for buy limit orders and `-1` for
/// sell limit orders).
pub mod lobster {
    use std::io::Read;

    use super::{EventType, RawEvent, Side};
    use crate::error::{Error, Result};

    /// Parses decimal seconds (`34200.004241176`) into integer nanoseconds
    /// without going through floating point.
    pub fn seconds_to_ns(text: &str) -> Option<i64> {
        let text = text.trim();
        let (whole, frac) = match text.split_once('.') {
            Some((w, f)) => (w, f),
            None => (text, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if frac.len() > 9 && !frac[9..].bytes().all(|b| b == b'0') {
            return None;
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let secs: i64 = whole.parse().ok()?;
        let mut nanos: i64 = 0;
        for (i, b) in frac.bytes().take(9).enumerate() {
            nanos += (b - b'0') as i64 * 10i64.pow(8 - i as u32);
        }
        secs.checked_mul(crate::NANOS_PER_SEC)?.checked_add(nanos)
    }

    /// Reads a LOBSTER message file into normalized events. Prices are kept
    /// in LOBSTER's integer ticks (dollars × 10 000).
    pub fn read_messages<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut events = Vec::new();
        for (offset, record) in csv.records().enumerate() {
            let line = offset as u64 + 1;
            let fail = |message: String| Error::Parse { line, message };
            let record = record.map_err(|e| fail(e.to_string()))?;
            if record.len() < 6 {
                return Err(fail(format!("expected 6 fields, found {}", record.len())));
            }
            let timestamp_ns = seconds_to_ns(&record[0]).ok_or_else(|| fail(format!("bad time {:?}", &record[0])))?;
            let code: u8 = record[1].parse().map_err(|e| fail(format!("event type: {e}")))?;
            let event_type =
                EventType::from_lobster_code(code).ok_or_else(|| fail(format!("unknown event code {code}")))?;
            let size: u64 = record[3].parse().map_err(|e| fail(format!("size: {e}")))?;
            let price: f64 = record[4].parse().map_err(|e| fail(format!("price: {e}")))?;
            let resting_side = match &record[5] {
                "1" => Side::Buy,
                "-1" => Side::Sell,
                other => return Err(fail(format!("bad direction {other:?}"))),
            };
            events.push(RawEvent {
                timestamp_ns,
                event_type,
                size,
                price,
                resting_side,
                ticker: None,
            });
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, 2).unwrap()
    }

    fn parse(text: &str) -> Result<Vec<TradeTape>> {
        let mut symbols = SymbolTable::new();
        let bounds = SessionBounds::new(0, 10_000).unwrap();
        parse_execution_events(text.as_bytes(), &mut symbols, Some("AAA"), day(), bounds)
    }

    #[test]
    fn same_timestamp_executions_merge() {
        let tapes = parse(
            "timestamp_ns,event_type,size,price,side\n\
             1000,execution,100,10.0,S\n\
             1000,execution,50,10.0,S\n",
        )
        .unwrap();
        assert_eq!(tapes.len(), 1);
        assert_eq!(
            tapes[0].trades(),
            &[Trade {
                timestamp_ns: 1000,
                symbol: 0,
                side: Side::Buy,
                quantity: 150
            }]
        );
    }

    #[test]
    fn submissions_are_dropped() {
        let tapes = parse(
            "timestamp_ns,event_type,size,price,side\n\
             1000,submission,100,10.0,S\n",
        )
        .unwrap();
        assert!(tapes.is_empty());
    }

    #[test]
    fn distinct_timestamps_stay_distinct() {
        let tapes = parse(
            "timestamp_ns,event_type,size,price,side\n\
             1001,execution,100,10.0,S\n\
             1000,execution,100,10.0,S\n",
        )
        .unwrap();
        let times: Vec<i64> = tapes[0].trades().iter().map(|t| t.timestamp_ns).collect();
        assert_eq!(times, vec![1000, 1001]);
        assert!(tapes[0].trades().iter().all(|t| t.side == Side::Buy));
    }

    #[test]
    fn opposite_sides_at_same_time_are_kept_apart() {
        let tapes = parse(
            "timestamp_ns,event_type,size,price,side\n\
             1000,4,100,10.0,S\n\
             1000,5,70,10.0,B\n",
        )
        .unwrap();
        assert_eq!(tapes[0].len(), 2);
        assert_eq!(tapes[0].total_quantity(), 170);
    }

    #[test]
    fn empty_input_gives_no_tapes() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("timestamp_ns,event_type,size,price,side\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse(
            "timestamp_ns,event_type,size,price,side\n\
             1000,execution,100,10.0,S\n\
             abc,execution,100,10.0,S\n",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(matches!(
            parse("time,type,size,price,side\n1,4,1,1,S\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn symbol_column_splits_tapes() {
        let mut symbols = SymbolTable::new();
        let bounds = SessionBounds::new(0, 10_000).unwrap();
        let text = "timestamp_ns,event_type,size,price,side,symbol\n\
                    10,execution,1,1,B,XYZ\n\
                    20,execution,2,1,B,ABC\n\
                    30,execution,3,1,S,XYZ\n";
        let tapes = parse_execution_events(text.as_bytes(), &mut symbols, None, day(), bounds).unwrap();
        assert_eq!(tapes.len(), 2);
        assert_eq!(symbols.ticker(tapes[0].symbol()), Some("XYZ"));
        assert_eq!(tapes[0].len(), 2);
        assert_eq!(tapes[1].trades()[0].side, Side::Sell);
    }

    #[test]
    fn session_filter_is_closed_interval() {
        let trades = [999, 1000, 1500, 2000, 2001]
            .iter()
            .map(|&t| Trade {
                timestamp_ns: t,
                symbol: 0,
                side: Side::Buy,
                quantity: 1,
            })
            .collect();
        let tape = TradeTape::new(0, day(), trades).unwrap();
        let kept = filter_session(&tape, SessionBounds::new(1000, 2000).unwrap());
        let times: Vec<i64> = kept.trades().iter().map(|t| t.timestamp_ns).collect();
        assert_eq!(times, vec![1000, 1500, 2000]);
    }

    #[test]
    fn session_bounds_reject_inverted_interval() {
        assert!(SessionBounds::new(5, 5).is_err());
        assert!(SessionBounds::new(6, 5).is_err());
    }

    #[test]
    fn tape_rejects_unsorted_trades() {
        let t = |ts| Trade {
            timestamp_ns: ts,
            symbol: 0,
            side: Side::Sell,
            quantity: 1,
        };
        assert!(matches!(
            TradeTape::new(0, day(), vec![t(5), t(3)]),
            Err(Error::UnsortedTape { position: 1, .. })
        ));
    }

    #[test]
    fn direction_flip_is_involution() {
        for side in [Side::Buy, Side::Sell] {
            assert_eq!(initiator_side(initiator_side(side)), side);
            assert_ne!(initiator_side(side), side);
        }
    }

    #[test]
    fn lobster_time_is_parsed_exactly() {
        assert_eq!(lobster::seconds_to_ns("34200.004241176"), Some(34_200_004_241_176));
        assert_eq!(lobster::seconds_to_ns("34200.5"), Some(34_200_500_000_000));
        assert_eq!(lobster::seconds_to_ns("34200"), Some(34_200_000_000_000));
        assert_eq!(lobster::seconds_to_ns("-1.0"), None);
        assert_eq!(lobster::seconds_to_ns("1.0000000001"), None);
    }

    #[test]
    fn lobster_messages_map_to_events() {
        let text = "34200.000000001,1,11,100,1000000,1\n34200.100000000,4,11,40,1000000,1\n";
        let events = lobster::read_messages(text.as_bytes()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].event_type, EventType::Execution);
        assert_eq!(events[1].resting_side, Side::Buy);
        let mut symbols = SymbolTable::new();
        let tapes = trades_from_events(&events, &mut symbols, Some("AAPL"), day(), SessionBounds::default()).unwrap();
        assert_eq!(tapes[0].trades()[0].side, Side::Sell);
        assert_eq!(tapes[0].trades()[0].quantity, 40);
    }

    #[test]
    fn symbol_table_round_trips() {
        let mut table = SymbolTable::from_tickers(["A", "B"]).unwrap();
        assert_eq!(table.id("B"), Some(1));
        assert_eq!(table.intern("A"), 0);
        assert!(SymbolTable::from_tickers(["A", "A"]).is_err());
        assert!(matches!(table.sector_labels(), Err(Error::MissingSector(_))));
        table.set_sector(0, "Tech").unwrap();
        table.set_sector(1, "Energy").unwrap();
        assert_eq!(table.sector_labels().unwrap(), vec!["Tech", "Energy"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_trades() -> impl Strategy<Value = Vec<Trade>> {
            prop::collection::vec((0i64..50, any::<bool>(), 1u64..500), 0..60).prop_map(|rows| {
                rows.into_iter()
                    .map(|(t, buy, q)| Trade {
                        timestamp_ns: t,
                        symbol: 0,
                        side: if buy { Side::Buy } else { Side::Sell },
                        quantity: q,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn aggregation_is_idempotent(trades in arb_trades()) {
                let once = aggregate_trades(trades);
                prop_assert_eq!(aggregate_trades(once.clone()), once);
            }

            #[test]
            fn aggregation_conserves_quantity(trades in arb_trades()) {
                let before: u64 = trades.iter().map(|t| t.quantity).sum();
                let after: u64 = aggregate_trades(trades).iter().map(|t| t.quantity).sum();
                prop_assert_eq!(before, after);
            }

            #[test]
            fn aggregated_keys_are_unique(trades in arb_trades()) {
                let out = aggregate_trades(trades);
                for w in out.windows(2) {
                    prop_assert!((w[0].timestamp_ns, w[0].side) < (w[1].timestamp_ns, w[1].side));
                }
            }

            #[test]
            fn session_filter_matches_linear_scan(trades in arb_trades(), open in 0i64..25, width in 1i64..30) {
                let tape = TradeTape::from_unsorted(0, NaiveDate::from_ymd_opt(2019, 1, 2).unwrap(), trades).unwrap();
                let bounds = SessionBounds::new(open, open + width).unwrap();
                let mut expected = Vec::new();
                for t in tape.trades() {
                    if t.timestamp_ns >= open && t.timestamp_ns <= open + width {
                        expected.push(*t);
                    }
                }
                let filtered = filter_session(&tape, bounds);
                prop_assert_eq!(filtered.trades(), expected.as_slice());
            }
        }
    }
}
