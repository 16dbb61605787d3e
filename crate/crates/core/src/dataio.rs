//! Price-panel ingestion, log-return construction and descriptive statistics.
//!
//! Input files are UTF-8 CSV with a `date` column followed by one column per
//! market. Dates are `YYYY-MM`, ISO `YYYY-MM-DD`, or a user-supplied chrono
//! format. Rows are sorted by date and must be equally spaced at the declared
//! frequency; missing cells are never interpolated.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing between consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frequency {
    Months(u32),
    Days(u32),
}

impl Frequency {
    pub const MONTHLY: Frequency = Frequency::Months(1);

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monthly" | "m" => Ok(Frequency::Months(1)),
            "quarterly" | "q" => Ok(Frequency::Months(3)),
            "annual" | "yearly" | "a" => Ok(Frequency::Months(12)),
            "daily" | "d" => Ok(Frequency::Days(1)),
            "weekly" | "w" => Ok(Frequency::Days(7)),
            other => {
                let (num, unit) = other.split_at(other.len().saturating_sub(1));
                let n: u32 = num
                    .parse()
                    .map_err(|_| Error::invalid(format!("unknown frequency `{s}`")))?;
                if n == 0 {
                    return Err(Error::invalid("frequency step must be positive"));
                }
                match unit {
                    "m" => Ok(Frequency::Months(n)),
                    "d" => Ok(Frequency::Days(n)),
                    _ => Err(Error::invalid(format!("unknown frequency `{s}`"))),
                }
            }
        }
    }

    fn step_between(&self, a: NaiveDate, b: NaiveDate) -> i64 {
        match self {
            Frequency::Months(_) => {
                (b.year() as i64 * 12 + b.month0() as i64) - (a.year() as i64 * 12 + a.month0() as i64)
            }
            Frequency::Days(_) => (b - a).num_days(),
        }
    }

    fn step(&self) -> i64 {
        match *self {
            Frequency::Months(n) | Frequency::Days(n) => n as i64,
        }
    }
}

/// How dates are rendered on output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DateStyle {
    YearMonth,
    Iso,
    Custom(String),
}

impl DateStyle {
    pub fn format(&self, d: NaiveDate) -> String {
        match self {
            DateStyle::YearMonth => d.format("%Y-%m").to_string(),
            DateStyle::Iso => d.format("%Y-%m-%d").to_string(),
            DateStyle::Custom(f) => d.format(f).to_string(),
        }
    }
}

/// Column mapping and validation options for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelLayout {
    pub date_column: String,
    /// chrono format string; `None` auto-detects `YYYY-MM` / `YYYY-MM-DD`.
    pub date_format: Option<String>,
    pub frequency: Frequency,
    /// Drop rows with missing cells instead of rejecting the file.
    pub drop_incomplete_rows: bool,
}

impl Default for PanelLayout {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            date_format: None,
            frequency: Frequency::MONTHLY,
            drop_incomplete_rows: false,
        }
    }
}

/// Aligned multi-market price-index levels.
#[derive(Debug, Clone)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    date_style: DateStyle,
    markets: Vec<String>,
    prices: DMatrix<f64>,
    dropped_rows: usize,
}

impl PricePanel {
    /// Validates positivity and shape; dates must already be strictly increasing.
    pub fn new(
        dates: Vec<NaiveDate>,
        date_style: DateStyle,
        markets: Vec<String>,
        prices: DMatrix<f64>,
    ) -> Result<Self> {
        check_shape(&dates, &markets, &prices)?;
        check_increasing(&dates)?;
        for j in 0..prices.ncols() {
            for t in 0..prices.nrows() {
                let v = prices[(t, j)];
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Domain(format!(
                        "price for market `{}` on {} is {v}; prices must be strictly positive",
                        markets[j],
                        date_style.format(dates[t])
                    )));
                }
            }
        }
        Ok(Self {
            dates,
            date_style,
            markets,
            prices,
            dropped_rows: 0,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn date_style(&self) -> &DateStyle {
        &self.date_style
    }
    pub fn markets(&self) -> &[String] {
        &self.markets
    }
    /// `T_raw x k` matrix of levels.
    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }
    pub fn len(&self) -> usize {
        self.prices.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.prices.nrows() == 0
    }
    /// Rows removed because of missing cells (only with `drop_incomplete_rows`).
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }
}

/// `T x k` per-period log returns; row `t` is dated by the later price.
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    date_style: DateStyle,
    markets: Vec<String>,
    returns: DMatrix<f64>,
    dropped: usize,
}

impl ReturnsPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        date_style: DateStyle,
        markets: Vec<String>,
        returns: DMatrix<f64>,
    ) -> Result<Self> {
        check_shape(&dates, &markets, &returns)?;
        check_increasing(&dates)?;
        if let Some((i, _)) = returns.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (t, j) = (i % returns.nrows(), i / returns.nrows());
            return Err(Error::Domain(format!(
                "non-finite return for market `{}` at row {t}",
                markets[j]
            )));
        }
        Ok(Self {
            dates,
            date_style,
            markets,
            returns,
            dropped: 0,
        })
    }

    /// Panel with synthetic monthly dates (from 2000-01) and labels `y1..yk`.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..returns.nrows())
            .map(|t| start.checked_add_months(chrono::Months::new(t as u32)).expect("date overflow"))
            .collect();
        let markets = (1..=returns.ncols()).map(|j| format!("y{j}")).collect();
        Self::new(dates, DateStyle::YearMonth, markets, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn date_style(&self) -> &DateStyle {
        &self.date_style
    }
    pub fn date_labels(&self) -> Vec<String> {
        self.dates.iter().map(|d| self.date_style.format(*d)).collect()
    }
    pub fn markets(&self) -> &[String] {
        &self.markets
    }
    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }
    /// Number of periods `T`.
    pub fn len(&self) -> usize {
        self.returns.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.returns.nrows() == 0
    }
    pub fn n_markets(&self) -> usize {
        self.returns.ncols()
    }
    /// Input rows discarded for missing cells.
    pub fn dropped_rows(&self) -> usize {
        self.dropped
    }
    pub fn series(&self, market: usize) -> Vec<f64> {
        self.returns.column(market).iter().copied().collect()
    }

    /// Restricts the panel to `names`, in the order given.
    pub fn select_markets<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("market subset is empty"));
        }
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let j = self
                .markets
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| Error::invalid(format!("market `{name}` not present in input")))?;
            if idx.contains(&j) {
                return Err(Error::invalid(format!("market `{name}` listed twice")));
            }
            idx.push(j);
        }
        let returns = self.returns.select_columns(idx.iter());
        Ok(Self {
            dates: self.dates.clone(),
            date_style: self.date_style.clone(),
            markets: idx.iter().map(|&j| self.markets[j].clone()).collect(),
            returns,
            dropped: self.dropped,
        })
    }
}

fn check_shape(dates: &[NaiveDate], markets: &[String], m: &DMatrix<f64>) -> Result<()> {
    if markets.is_empty() {
        return Err(Error::invalid("panel has no market columns"));
    }
    if m.ncols() != markets.len() || m.nrows() != dates.len() {
        return Err(Error::invalid(format!(
            "panel shape {}x{} does not match {} dates and {} markets",
            m.nrows(),
            m.ncols(),
            dates.len(),
            markets.len()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InsufficientData {
            what: "panel",
            needed: 1,
            got: 0,
        });
    }
    Ok(())
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Frequency(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
    }
    Ok(())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "N/A" | "NaN" | "nan" | "." | "null")
}

fn parse_date(s: &str, format: Option<&str>) -> Option<(NaiveDate, DateStyle)> {
    match format {
        Some(f) => {
            if let Ok(d) = NaiveDate::parse_from_str(s, f) {
                return Some((d, DateStyle::Custom(f.to_string())));
            }
            // formats without a day-of-month field
            NaiveDate::parse_from_str(&format!("{s} 01"), &format!("{f} %d"))
                .ok()
                .map(|d| (d, DateStyle::Custom(f.to_string())))
        }
        None => {
            if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
                return Some((d, DateStyle::Iso));
            }
            NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
                .ok()
                .map(|d| (d, DateStyle::YearMonth))
        }
    }
}

struct RawPanel {
    dates: Vec<NaiveDate>,
    date_style: DateStyle,
    markets: Vec<String>,
    values: DMatrix<f64>,
    /// CSV line of each retained row, for diagnostics.
    lines: Vec<u64>,
    dropped: usize,
}

fn read_raw<R: Read>(reader: R, layout: &PanelLayout) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let date_col = header
        .iter()
        .position(|h| h == layout.date_column)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("header has no `{}` column", layout.date_column),
        })?;
    let market_cols: Vec<usize> = (0..header.len()).filter(|&c| c != date_col).collect();
    if market_cols.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "header names no market columns".into(),
        });
    }
    let markets: Vec<String> = market_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut rows: Vec<(NaiveDate, u64, Vec<f64>)> = Vec::new();
    let mut style: Option<DateStyle> = None;
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let raw_date = &record[date_col];
        let (date, row_style) =
            parse_date(raw_date, layout.date_format.as_deref()).ok_or_else(|| Error::Parse {
                line,
                message: format!("unparseable date `{raw_date}`"),
            })?;
        match &style {
            None => style = Some(row_style),
            Some(s) if *s != row_style => {
                return Err(Error::Parse {
                    line,
                    message: format!("date `{raw_date}` uses a different format than earlier rows"),
                })
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(market_cols.len());
        let mut incomplete = false;
        for (m, &c) in market_cols.iter().enumerate() {
            let cell = &record[c];
            if is_missing(cell) {
                if !layout.drop_incomplete_rows {
                    return Err(Error::Parse {
                        line,
                        message: format!("missing value for market `{}`", markets[m]),
                    });
                }
                incomplete = true;
                break;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value `{cell}` for market `{}`", markets[m]),
            })?;
            values.push(v);
        }
        if incomplete {
            dropped += 1;
            continue;
        }
        rows.push((date, line, values));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        let step = layout.frequency.step_between(w[0].0, w[1].0);
        if step == 0 {
            return Err(Error::Frequency(format!(
                "duplicate date {} (lines {} and {})",
                w[1].0, w[0].1, w[1].1
            )));
        }
        if step != layout.frequency.step() {
            return Err(Error::Frequency(format!(
                "irregular spacing between {} and {} (line {}); expected {:?}",
                w[0].0, w[1].0, w[1].1, layout.frequency
            )));
        }
    }
    let t = rows.len();
    let k = markets.len();
    let values = DMatrix::from_fn(t, k, |i, j| rows[i].2[j]);
    Ok(RawPanel {
        dates: rows.iter().map(|r| r.0).collect(),
        date_style: style.unwrap_or(DateStyle::YearMonth),
        markets,
        values,
        lines: rows.iter().map(|r| r.1).collect(),
        dropped,
    })
}

/// Reads a price panel from any CSV source.
pub fn read_price_panel<R: Read>(reader: R, layout: &PanelLayout) -> Result<PricePanel> {
    let raw = read_raw(reader, layout)?;
    for j in 0..raw.values.ncols() {
        for t in 0..raw.values.nrows() {
            let v = raw.values[(t, j)];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!(
                    "non-positive price {v} for market `{}` at line {}",
                    raw.markets[j], raw.lines[t]
                )));
            }
        }
    }
    let mut panel = PricePanel::new(raw.dates, raw.date_style, raw.markets, raw.values)?;
    panel.dropped_rows = raw.dropped;
    Ok(panel)
}

/// Loads a price panel from a CSV file.
pub fn load_price_panel(path: impl AsRef<Path>, layout: &PanelLayout) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_price_panel(file, layout)
}

/// Reads a panel whose cells are already per-period returns.
pub fn read_returns_panel<R: Read>(reader: R, layout: &PanelLayout) -> Result<ReturnsPanel> {
    let raw = read_raw(reader, layout)?;
    for j in 0..raw.values.ncols() {
        for t in 0..raw.values.nrows() {
            if !raw.values[(t, j)].is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite return for market `{}` at line {}",
                    raw.markets[j], raw.lines[t]
                )));
            }
        }
    }
    let mut panel = ReturnsPanel::new(raw.dates, raw.date_style, raw.markets, raw.values)?;
    panel.dropped = raw.dropped;
    Ok(panel)
}

pub fn load_returns_panel(path: impl AsRef<Path>, layout: &PanelLayout) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_returns_panel(file, layout)
}

/// First difference of log prices. `T = T_raw - 1`.
pub fn to_log_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    let t_raw = panel.len();
    if t_raw < 2 {
        return Err(Error::InsufficientData {
            what: "log returns",
            needed: 2,
            got: t_raw,
        });
    }
    let p = &panel.prices;
    let returns = DMatrix::from_fn(t_raw - 1, p.ncols(), |t, j| p[(t + 1, j)].ln() - p[(t, j)].ln());
    let mut out = ReturnsPanel::new(
        panel.dates[1..].to_vec(),
        panel.date_style.clone(),
        panel.markets.clone(),
        returns,
    )?;
    out.dropped = panel.dropped_rows;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    pub market: String,
    pub mean: f64,
    /// Sample standard deviation, divisor `n - 1`.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub markets: Vec<MarketStats>,
    pub n: usize,
}

/// Mean, sample sd, min and max of each market's returns.
pub fn describe(returns: &ReturnsPanel) -> Result<DescriptiveStats> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "descriptive statistics",
            needed: 2,
            got: n,
        });
    }
    let markets = returns
        .markets
        .iter()
        .zip(returns.returns.column_iter())
        .map(|(name, col)| {
            // Welford
            let mut mean = 0.0;
            let mut m2 = 0.0;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for (i, &x) in col.iter().enumerate() {
                let delta = x - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (x - mean);
                min = min.min(x);
                max = max.max(x);
            }
            MarketStats {
                market: name.clone(),
                mean,
                sd: (m2 / (n - 1) as f64).sqrt(),
                min,
                max,
                n,
            }
        })
        .collect();
    Ok(DescriptiveStats { markets, n })
}
