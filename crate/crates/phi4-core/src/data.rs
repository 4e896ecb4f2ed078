//! Price ingestion, log-return panels, binarization and windowing.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};
use crate::model::FieldConfig;

/// Column names for long-format CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub date_col: String,
    pub ticker_col: String,
    pub close_col: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_col: "date".into(),
            ticker_col: "ticker".into(),
            close_col: "close".into(),
        }
    }
}

/// Raw close prices keyed by (ticker, date). Duplicate keys are rejected at
/// insertion.
#[derive(Debug, Clone, Default)]
pub struct PriceTable {
    prices: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

impl PriceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ticker: &str, date: NaiveDate, price: f64) -> Result<()> {
        if !(price > 0.0) || !price.is_finite() {
            return Err(Error::NonPositivePrice {
                ticker: ticker.into(),
                date: date.to_string(),
                price,
            });
        }
        let series = self.prices.entry(ticker.to_string()).or_default();
        if series.insert(date, price).is_some() {
            return Err(Error::DuplicateKey { ticker: ticker.into(), date: date.to_string() });
        }
        Ok(())
    }

    pub fn tickers(&self) -> Vec<String> {
        self.prices.keys().cloned().collect()
    }

    pub fn series(&self, ticker: &str) -> Option<&BTreeMap<NaiveDate, f64>> {
        self.prices.get(ticker)
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Merges another table (e.g. one wide file per ticker).
    pub fn extend(&mut self, other: PriceTable) -> Result<()> {
        for (ticker, series) in other.prices {
            for (date, price) in series {
                self.insert(&ticker, date, price)?;
            }
        }
        Ok(())
    }
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| Error::CsvParse {
        line,
        msg: format!("expected ISO-8601 date, got {s:?}"),
    })
}

fn parse_price(s: &str, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::CsvParse {
        line,
        msg: format!("expected numeric price, got {s:?}"),
    })
}

/// Ingests long-format CSV (`date,ticker,close` by default) into a price
/// table. Reports malformed rows with their line number; duplicate
/// (ticker, date) rows and non-positive prices are errors.
pub fn ingest_csv_long(reader: impl Read, schema: &CsvSchema) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::CsvParse {
            line: 1,
            msg: format!("missing column {name:?} in header {headers:?}"),
        })
    };
    let date_i = col(&schema.date_col)?;
    let ticker_i = col(&schema.ticker_col)?;
    let close_i = col(&schema.close_col)?;

    let mut table = PriceTable::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::CsvParse {
                line,
                msg: format!("row has {} fields, expected {}", record.len(), headers.len()),
            })
        };
        let date = parse_date(field(date_i)?, line)?;
        let ticker = field(ticker_i)?.to_string();
        let price = parse_price(field(close_i)?, line)?;
        table.insert(&ticker, date, price)?;
    }
    if table.is_empty() {
        return Err(Error::EmptyInput("price csv"));
    }
    Ok(table)
}

/// Ingests one wide-format CSV (`date,close`) for a single ticker.
pub fn ingest_csv_wide(reader: impl Read, ticker: &str) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_i = headers.iter().position(|h| h == "date").ok_or_else(|| Error::CsvParse {
        line: 1,
        msg: "missing column \"date\"".into(),
    })?;
    let close_i = headers.iter().position(|h| h == "close").ok_or_else(|| Error::CsvParse {
        line: 1,
        msg: "missing column \"close\"".into(),
    })?;
    let mut table = PriceTable::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(record.get(date_i).unwrap_or(""), line)?;
        let price = parse_price(record.get(close_i).unwrap_or(""), line)?;
        table.insert(ticker, date, price)?;
    }
    if table.is_empty() {
        return Err(Error::EmptyInput("price csv"));
    }
    Ok(table)
}

pub fn ingest_csv_long_path(path: &Path, schema: &CsvSchema) -> Result<PriceTable> {
    ingest_csv_long(std::fs::File::open(path)?, schema)
}

/// Aligned multivariate log-return series: one row per trading date, one
/// column per ticker, no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    rows: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn from_parts(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::EmptyInput("return panel"));
        }
        if rows.len() != dates.len() {
            return Err(Error::DimensionMismatch { expected: dates.len(), got: rows.len() });
        }
        for row in &rows {
            if row.len() != tickers.len() {
                return Err(Error::DimensionMismatch {
                    expected: tickers.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { context: "return panel" });
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("panel dates must be strictly increasing".into()));
        }
        Ok(Self { tickers, dates, rows })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn day_row(&self, idx: usize) -> &[f64] {
        &self.rows[idx]
    }

    pub fn ticker_index(&self, ticker: &str) -> Result<usize> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .ok_or_else(|| Error::UnknownTicker(ticker.into()))
    }

    /// One ticker's return series in date order.
    pub fn column(&self, ticker: &str) -> Result<Vec<f64>> {
        let i = self.ticker_index(ticker)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Sub-panel with the given tickers in the given order.
    pub fn select_tickers(&self, tickers: &[String]) -> Result<ReturnPanel> {
        let idx: Vec<usize> = tickers
            .iter()
            .map(|t| self.ticker_index(t))
            .collect::<Result<_>>()?;
        ReturnPanel::from_parts(
            tickers.to_vec(),
            self.dates.clone(),
            self.rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
        )
    }

    /// Daily return vectors as field configurations (the training set).
    pub fn day_vectors(&self) -> Vec<FieldConfig> {
        self.rows
            .iter()
            .map(|r| FieldConfig::new(r.clone()).expect("panel rows are finite"))
            .collect()
    }

    /// Trailing sub-panel covering the last `days` rows.
    pub fn tail(&self, days: usize) -> Result<ReturnPanel> {
        if days == 0 || days > self.n_days() {
            return Err(Error::InsufficientHistory { needed: days, have: self.n_days() });
        }
        let start = self.n_days() - days;
        ReturnPanel::from_parts(
            self.tickers.clone(),
            self.dates[start..].to_vec(),
            self.rows[start..].to_vec(),
        )
    }
}

/// Builds the aligned log-return panel `r_t = ln(P_t / P_{t-1})` per ticker,
/// keeping only dates on which every ticker has a return. Returns the panel
/// and the number of dropped (incomplete) rows, which is also logged.
pub fn log_returns(table: &PriceTable) -> Result<(ReturnPanel, usize)> {
    if table.is_empty() {
        return Err(Error::EmptyInput("price table"));
    }
    let tickers = table.tickers();
    let mut per_ticker: Vec<BTreeMap<NaiveDate, f64>> = Vec::with_capacity(tickers.len());
    for t in &tickers {
        let series = table.series(t).expect("ticker listed");
        if series.len() < 2 {
            return Err(Error::InsufficientHistory { needed: 2, have: series.len() });
        }
        let mut returns = BTreeMap::new();
        let mut prev: Option<f64> = None;
        for (&date, &price) in series {
            if let Some(p) = prev {
                returns.insert(date, (price / p).ln());
            }
            prev = Some(price);
        }
        per_ticker.push(returns);
    }

    // Union of candidate dates, keep the intersection.
    let mut all_dates: Vec<NaiveDate> = per_ticker
        .iter()
        .flat_map(|m| m.keys().copied())
        .collect();
    all_dates.sort();
    all_dates.dedup();

    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for date in all_dates {
        let row: Option<Vec<f64>> =
            per_ticker.iter().map(|m| m.get(&date).copied()).collect();
        match row {
            Some(r) => {
                dates.push(date);
                rows.push(r);
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} incomplete panel rows during alignment");
    }
    if dates.is_empty() {
        return Err(Error::EmptyInput("aligned panel (no common dates)"));
    }
    Ok((ReturnPanel { tickers, dates, rows }, dropped))
}

/// Sign map of every return; exact zeros go to +1.
pub fn binarize(panel: &ReturnPanel) -> ReturnPanel {
    ReturnPanel {
        tickers: panel.tickers.clone(),
        dates: panel.dates.clone(),
        rows: panel
            .rows
            .iter()
            .map(|r| r.iter().map(|&x| binarize_value(x)).collect())
            .collect(),
    }
}

pub fn binarize_value(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Trailing simple moving average; output has length `len - window + 1`.
pub fn sma(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > series.len() {
        return Err(Error::InvalidConfig(format!(
            "sma window {window} invalid for series of length {}",
            series.len()
        )));
    }
    let inv = 1.0 / window as f64;
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut acc: f64 = series[..window].iter().sum();
    out.push(acc * inv);
    for i in window..series.len() {
        acc += series[i] - series[i - window];
        out.push(acc * inv);
    }
    Ok(out)
}

/// Affine map of `[min(series), max(series)]` onto `[target_min, target_max]`.
/// Constant input maps to the midpoint.
pub fn minmax_rescale(series: &[f64], target_min: f64, target_max: f64) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![(target_min + target_max) / 2.0; series.len()];
    }
    let scale = (target_max - target_min) / (hi - lo);
    series.iter().map(|&x| target_min + (x - lo) * scale).collect()
}

/// Sliding-window training vectors for one ticker: anchor day first, then the
/// preceding days in reverse chronological order.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub window: usize,
    pub vectors: Vec<FieldConfig>,
    pub anchor_dates: Vec<NaiveDate>,
}

/// Builds windows of length `w` over a ticker's series. Anchors run in
/// chronological order with the given stride (the newest anchor is always
/// kept); `max_count` keeps only the most recent anchors.
pub fn build_windows(
    panel: &ReturnPanel,
    ticker: &str,
    w: usize,
    stride: usize,
    max_count: Option<usize>,
) -> Result<WindowedDataset> {
    let series = panel.column(ticker)?;
    let vectors = window_vectors(&series, w, stride, max_count)?;
    let anchors = anchor_indices(series.len(), w, stride, max_count)?;
    Ok(WindowedDataset {
        window: w,
        anchor_dates: anchors.iter().map(|&i| panel.dates[i]).collect(),
        vectors,
    })
}

/// Anchor indices (chronological) for a series of `len` days.
fn anchor_indices(
    len: usize,
    w: usize,
    stride: usize,
    max_count: Option<usize>,
) -> Result<Vec<usize>> {
    if w == 0 || stride == 0 {
        return Err(Error::InvalidConfig("window and stride must be positive".into()));
    }
    if len < w {
        return Err(Error::InsufficientHistory { needed: w, have: len });
    }
    // Walk back from the newest anchor so it is always included.
    let mut anchors: Vec<usize> = (0..)
        .map(|k| len - 1 - k * stride)
        .take_while(|&i| i + 1 >= w)
        .take(max_count.unwrap_or(usize::MAX))
        .collect();
    anchors.reverse();
    Ok(anchors)
}

/// Window vectors over a raw series (newest-first inside each vector).
pub fn window_vectors(
    series: &[f64],
    w: usize,
    stride: usize,
    max_count: Option<usize>,
) -> Result<Vec<FieldConfig>> {
    let anchors = anchor_indices(series.len(), w, stride, max_count)?;
    anchors
        .iter()
        .map(|&i| {
            let vals: Vec<f64> = (0..w).map(|k| series[i - k]).collect();
            FieldConfig::new(vals)
        })
        .collect()
}
