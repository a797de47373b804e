//! Loading, alignment, and liquidity filtering of raw daily quote data.
//!
//! Raw quotes (date, ticker, close, volume) are aligned to the
//! intersection of dates on which every ticker traded, labelled with
//! sectors from a ticker-to-sector map, and filtered for illiquidity:
//! firms whose price repeats on too large a fraction of days, or stays
//! flat for too long a run, are dropped. No imputation is performed;
//! dropping a date for one firm drops it for all.

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Default fraction of unchanged-price days above which a firm counts
/// as illiquid.
pub const DEFAULT_STALE_FRACTION: f64 = 0.07;

/// Default length (in days) of a flat price run that disqualifies a firm.
pub const DEFAULT_MAX_FLAT_RUN: usize = 10;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("ticker {0} is missing from the sector map")]
    MissingSector(String),

    #[error("duplicate quote for ticker {ticker} on {date}")]
    DuplicateQuote { ticker: String, date: NaiveDate },

    #[error("non-positive price {price} for ticker {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        price: f64,
    },

    #[error("negative volume {volume} for ticker {ticker} on {date}")]
    NegativeVolume {
        ticker: String,
        date: NaiveDate,
        volume: f64,
    },

    #[error("empty panel: no date is shared by all tickers")]
    EmptyPanel,

    #[error("empty panel after filtering")]
    EmptyAfterFilter,

    #[error("invalid filter parameter: {0}")]
    BadFilterParameter(String),

    #[error("year {year} is outside the panel range {first}..{last}")]
    YearOutOfRange { year: i32, first: i32, last: i32 },
}

/// One parsed quote record.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuote {
    pub date: NaiveDate,
    pub ticker: String,
    pub price: f64,
    pub volume: f64,
}

/// Ticker-to-sector mapping. The set of distinct sector names in the map
/// defines the sector taxonomy, whether or not every sector ends up
/// populated in a given panel.
#[derive(Debug, Clone, Default)]
pub struct SectorMap {
    by_ticker: BTreeMap<String, String>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ticker: impl Into<String>, sector: impl Into<String>) {
        self.by_ticker.insert(ticker.into(), sector.into());
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut map = Self::new();
        for (t, s) in pairs {
            map.insert(t, s);
        }
        map
    }

    pub fn sector_of(&self, ticker: &str) -> Option<&str> {
        self.by_ticker.get(ticker).map(String::as_str)
    }

    /// Distinct sector names, sorted.
    pub fn taxonomy(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.by_ticker.values().collect();
        set.into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.by_ticker.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ticker.is_empty()
    }
}

/// Aligned daily price/volume panel over N firms and T trading days.
#[derive(Debug, Clone)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub sectors: Vec<String>,
    /// N x T close prices.
    pub prices: Array2<f64>,
    /// N x T traded volumes.
    pub volumes: Array2<f64>,
}

impl PricePanel {
    pub fn n_firms(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Per-firm volume summed over the dates of `year` present in the panel.
    pub fn annual_volume(&self, year: i32) -> Result<Vec<f64>, IngestError> {
        annual_volume_impl(&self.dates, &self.volumes, year)
    }
}

pub(crate) fn annual_volume_impl(
    dates: &[NaiveDate],
    volumes: &Array2<f64>,
    year: i32,
) -> Result<Vec<f64>, IngestError> {
    let first = dates.first().map(|d| d.year()).unwrap_or(year + 1);
    let last = dates.last().map(|d| d.year()).unwrap_or(year - 1);
    if year < first || year > last {
        return Err(IngestError::YearOutOfRange { year, first, last });
    }
    let n = volumes.nrows();
    let mut totals = vec![0.0; n];
    for (t, date) in dates.iter().enumerate() {
        if date.year() == year {
            for i in 0..n {
                totals[i] += volumes[[i, t]];
            }
        }
    }
    Ok(totals)
}

/// Align raw quotes into a panel restricted to dates every ticker quotes on.
///
/// Dates come out strictly increasing; tickers are sorted. A ticker seen
/// in the quotes but absent from the sector map is an error naming it.
pub fn load_panel(quotes: &[RawQuote], sector_map: &SectorMap) -> Result<PricePanel, IngestError> {
    let mut per_ticker: BTreeMap<&str, BTreeMap<NaiveDate, (f64, f64)>> = BTreeMap::new();
    for q in quotes {
        if q.price <= 0.0 || !q.price.is_finite() {
            return Err(IngestError::NonPositivePrice {
                ticker: q.ticker.clone(),
                date: q.date,
                price: q.price,
            });
        }
        if q.volume < 0.0 || !q.volume.is_finite() {
            return Err(IngestError::NegativeVolume {
                ticker: q.ticker.clone(),
                date: q.date,
                volume: q.volume,
            });
        }
        let entry = per_ticker.entry(&q.ticker).or_default();
        if entry.insert(q.date, (q.price, q.volume)).is_some() {
            return Err(IngestError::DuplicateQuote {
                ticker: q.ticker.clone(),
                date: q.date,
            });
        }
    }

    let tickers: Vec<String> = per_ticker.keys().map(|t| t.to_string()).collect();
    let mut sectors = Vec::with_capacity(tickers.len());
    for ticker in &tickers {
        match sector_map.sector_of(ticker) {
            Some(s) => sectors.push(s.to_string()),
            None => return Err(IngestError::MissingSector(ticker.clone())),
        }
    }

    // Intersection of date sets across tickers.
    let mut shared: Option<BTreeSet<NaiveDate>> = None;
    for days in per_ticker.values() {
        let set: BTreeSet<NaiveDate> = days.keys().copied().collect();
        shared = Some(match shared {
            None => set,
            Some(prev) => prev.intersection(&set).copied().collect(),
        });
    }
    let dates: Vec<NaiveDate> = shared.unwrap_or_default().into_iter().collect();
    if dates.is_empty() {
        return Err(IngestError::EmptyPanel);
    }

    let n = tickers.len();
    let t = dates.len();
    let mut prices = Array2::zeros((n, t));
    let mut volumes = Array2::zeros((n, t));
    for (i, ticker) in tickers.iter().enumerate() {
        let days = &per_ticker[ticker.as_str()];
        for (j, date) in dates.iter().enumerate() {
            let (p, v) = days[date];
            prices[[i, j]] = p;
            volumes[[i, j]] = v;
        }
    }

    Ok(PricePanel {
        dates,
        tickers,
        sectors,
        prices,
        volumes,
    })
}

/// Why a firm was dropped by the liquidity filter.
#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    /// Fraction of unchanged-price days exceeded the threshold.
    Stale { fraction: f64, threshold: f64 },
    /// A run of consecutive unchanged prices reached the limit.
    FlatRun { run: usize, max: usize },
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::Stale {
                fraction,
                threshold,
            } => write!(f, "stale {fraction:.2} > {threshold:.2}"),
            DropReason::FlatRun { run, max } => write!(f, "flat run {run} >= {max}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DroppedFirm {
    pub ticker: String,
    pub reason: DropReason,
}

/// Result of the liquidity filter: the surviving panel plus one entry
/// per dropped firm.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub panel: PricePanel,
    pub dropped: Vec<DroppedFirm>,
}

/// Drop illiquid firms from a panel.
///
/// A firm is dropped when its count of unchanged-price days exceeds
/// `stale_fraction * T`, or when any run of consecutive equal prices is
/// at least `max_flat_run` days long. Prices are compared for exact
/// equality as parsed; no arithmetic is applied first, so rounding
/// cannot manufacture spurious changes. Retained firms' rows are copied
/// unchanged, which makes the filter idempotent.
pub fn filter_liquidity(
    panel: &PricePanel,
    stale_fraction: f64,
    max_flat_run: usize,
) -> Result<FilterOutcome, IngestError> {
    if !(stale_fraction > 0.0 && stale_fraction < 1.0) {
        return Err(IngestError::BadFilterParameter(format!(
            "stale_fraction must be in (0, 1), got {stale_fraction}"
        )));
    }
    if max_flat_run < 2 {
        return Err(IngestError::BadFilterParameter(format!(
            "max_flat_run must be at least 2, got {max_flat_run}"
        )));
    }

    let t = panel.n_days();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..panel.n_firms() {
        let row = panel.prices.row(i);
        let mut stale_days = 0usize;
        let mut longest_run = 1usize;
        let mut run = 1usize;
        for j in 1..t {
            if row[j] == row[j - 1] {
                stale_days += 1;
                run += 1;
            } else {
                run = 1;
            }
            longest_run = longest_run.max(run);
        }
        if longest_run >= max_flat_run {
            dropped.push(DroppedFirm {
                ticker: panel.tickers[i].clone(),
                reason: DropReason::FlatRun {
                    run: longest_run,
                    max: max_flat_run,
                },
            });
        } else if stale_days as f64 > stale_fraction * t as f64 {
            dropped.push(DroppedFirm {
                ticker: panel.tickers[i].clone(),
                reason: DropReason::Stale {
                    fraction: stale_days as f64 / t as f64,
                    threshold: stale_fraction,
                },
            });
        } else {
            keep.push(i);
        }
    }

    if keep.is_empty() {
        return Err(IngestError::EmptyAfterFilter);
    }

    Ok(FilterOutcome {
        panel: select_firms(panel, &keep),
        dropped,
    })
}

pub(crate) fn select_firms(panel: &PricePanel, keep: &[usize]) -> PricePanel {
    let t = panel.n_days();
    let mut prices = Array2::zeros((keep.len(), t));
    let mut volumes = Array2::zeros((keep.len(), t));
    for (new_i, &i) in keep.iter().enumerate() {
        for j in 0..t {
            prices[[new_i, j]] = panel.prices[[i, j]];
            volumes[[new_i, j]] = panel.volumes[[i, j]];
        }
    }
    PricePanel {
        dates: panel.dates.clone(),
        tickers: keep.iter().map(|&i| panel.tickers[i].clone()).collect(),
        sectors: keep.iter().map(|&i| panel.sectors[i].clone()).collect(),
        prices,
        volumes,
    }
}

// ---------------------------------------------------------------------------
// Delimited-text interfaces
// ---------------------------------------------------------------------------

fn csv_reader<R: Read>(source: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
) -> Result<T, IngestError> {
    let raw = record.get(idx).ok_or_else(|| IngestError::Parse {
        line: record_line(record),
        message: format!("missing {what} column"),
    })?;
    raw.parse().map_err(|_| IngestError::Parse {
        line: record_line(record),
        message: format!("cannot parse {what} from {raw:?}"),
    })
}

fn parse_date(record: &csv::StringRecord, idx: usize) -> Result<NaiveDate, IngestError> {
    let raw = record.get(idx).ok_or_else(|| IngestError::Parse {
        line: record_line(record),
        message: "missing date column".into(),
    })?;
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| IngestError::Parse {
        line: record_line(record),
        message: format!("cannot parse ISO-8601 date from {raw:?}"),
    })
}

/// Read quote records: `date,ticker,price,volume` with a header row.
pub fn read_quotes<R: Read>(source: R, delimiter: u8) -> Result<Vec<RawQuote>, IngestError> {
    let mut reader = csv_reader(source, delimiter);
    let mut quotes = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        quotes.push(RawQuote {
            date: parse_date(&record, 0)?,
            ticker: record
                .get(1)
                .filter(|t| !t.is_empty())
                .ok_or_else(|| IngestError::Parse {
                    line: record_line(&record),
                    message: "missing ticker column".into(),
                })?
                .to_string(),
            price: parse_field(&record, 2, "price")?,
            volume: parse_field(&record, 3, "volume")?,
        });
    }
    if quotes.is_empty() {
        return Err(IngestError::Parse {
            line: 1,
            message: "no quote records after the header row".into(),
        });
    }
    Ok(quotes)
}

pub fn read_quotes_file(path: &Path, delimiter: u8) -> Result<Vec<RawQuote>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_quotes(file, delimiter)
}

/// Read a sector map: `ticker,sector` with a header row.
pub fn read_sector_map<R: Read>(source: R, delimiter: u8) -> Result<SectorMap, IngestError> {
    let mut reader = csv_reader(source, delimiter);
    let mut map = SectorMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let ticker = record.get(0).unwrap_or("");
        let sector = record.get(1).unwrap_or("");
        if ticker.is_empty() || sector.is_empty() {
            return Err(IngestError::Parse {
                line: record_line(&record),
                message: "sector map rows need ticker and sector".into(),
            });
        }
        map.insert(ticker, sector);
    }
    Ok(map)
}

pub fn read_sector_map_file(path: &Path, delimiter: u8) -> Result<SectorMap, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_sector_map(file, delimiter)
}

/// Read an external index series: `date,value` with a header row.
pub fn read_index_series<R: Read>(
    source: R,
    delimiter: u8,
) -> Result<Vec<(NaiveDate, f64)>, IngestError> {
    let mut reader = csv_reader(source, delimiter);
    let mut series = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        series.push((parse_date(&record, 0)?, parse_field(&record, 1, "value")?));
    }
    series.sort_by_key(|(d, _)| *d);
    Ok(series)
}

/// Write a panel as wide delimited text: one `date,<ticker...>` matrix per
/// file for prices and volumes, plus a `ticker,sector` file.
pub fn write_panel(
    panel: &PricePanel,
    prices_out: &mut dyn std::io::Write,
    volumes_out: &mut dyn std::io::Write,
    sectors_out: &mut dyn std::io::Write,
    delimiter: u8,
) -> Result<(), IngestError> {
    let sep = delimiter as char;
    let io_err = |source: std::io::Error| IngestError::Io {
        path: "<panel export>".into(),
        source,
    };

    let write_wide = |out: &mut dyn std::io::Write, matrix: &Array2<f64>| -> Result<(), IngestError> {
        let mut header = String::from("date");
        for ticker in &panel.tickers {
            header.push(sep);
            header.push_str(ticker);
        }
        writeln!(out, "{header}").map_err(io_err)?;
        for (j, date) in panel.dates.iter().enumerate() {
            let mut line = date.format("%Y-%m-%d").to_string();
            for i in 0..panel.n_firms() {
                line.push(sep);
                line.push_str(&format!("{}", matrix[[i, j]]));
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        Ok(())
    };
    write_wide(prices_out, &panel.prices)?;
    write_wide(volumes_out, &panel.volumes)?;

    writeln!(sectors_out, "ticker{sep}sector").map_err(io_err)?;
    for (ticker, sector) in panel.tickers.iter().zip(&panel.sectors) {
        writeln!(sectors_out, "{ticker}{sep}{sector}").map_err(io_err)?;
    }
    Ok(())
}

type WideTable = (Vec<String>, Vec<NaiveDate>, Vec<Vec<f64>>);

/// Read back a panel written by [`write_panel`].
pub fn read_panel<R: Read, R2: Read, R3: Read>(
    prices_in: R,
    volumes_in: R2,
    sectors_in: R3,
    delimiter: u8,
) -> Result<PricePanel, IngestError> {
    let read_wide = |source: &mut dyn Read| -> Result<WideTable, IngestError> {
        let mut reader = csv_reader(source, delimiter);
        let headers = reader
            .headers()
            .map_err(|e| IngestError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for result in reader.records() {
            let record = result.map_err(|e| IngestError::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            dates.push(parse_date(&record, 0)?);
            let mut row = Vec::with_capacity(tickers.len());
            for idx in 1..=tickers.len() {
                row.push(parse_field(&record, idx, "value")?);
            }
            rows.push(row);
        }
        Ok((tickers, dates, rows))
    };

    let mut prices_in = prices_in;
    let mut volumes_in = volumes_in;
    let (tickers, dates, price_rows) = read_wide(&mut prices_in)?;
    let (vol_tickers, vol_dates, volume_rows) = read_wide(&mut volumes_in)?;
    if tickers != vol_tickers || dates != vol_dates {
        return Err(IngestError::Parse {
            line: 0,
            message: "price and volume panels disagree on tickers or dates".into(),
        });
    }

    let map = read_sector_map(sectors_in, delimiter)?;
    let mut sectors = Vec::with_capacity(tickers.len());
    for ticker in &tickers {
        match map.sector_of(ticker) {
            Some(s) => sectors.push(s.to_string()),
            None => return Err(IngestError::MissingSector(ticker.clone())),
        }
    }

    let n = tickers.len();
    let t = dates.len();
    if t == 0 || n == 0 {
        return Err(IngestError::EmptyPanel);
    }
    let mut prices = Array2::zeros((n, t));
    let mut volumes = Array2::zeros((n, t));
    for j in 0..t {
        for i in 0..n {
            prices[[i, j]] = price_rows[j][i];
            volumes[[i, j]] = volume_rows[j][i];
        }
    }
    Ok(PricePanel {
        dates,
        tickers,
        sectors,
        prices,
        volumes,
    })
}
