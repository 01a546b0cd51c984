//! Daily OHLC price files in, aligned open-to-close log-return panels out.
//!
//! Input files carry a header row; only the date, open and close columns are
//! read (by default `date`, `open`, `close`), so the usual
//! `date,open,high,low,close[,volume]` layout works unchanged.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: {field} must be positive on {date}, got {value}")]
    NonPositive { line: u64, date: NaiveDate, field: &'static str, value: f64 },
    #[error("line {line}: duplicate date {date}")]
    DuplicateDate { line: u64, date: NaiveDate },
    #[error("duplicate series id {0:?}")]
    DuplicateSeries(String),
    #[error("no observations inside the date window")]
    EmptyWindow,
    #[error("invalid date window {0:?}; expected FROM:TO with ISO dates, either side may be empty")]
    BadWindow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Column mapping and date pattern for price files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceFormat {
    pub date_column: String,
    pub open_column: String,
    pub close_column: String,
    /// `chrono` strftime pattern.
    pub date_format: String,
}

impl Default for PriceFormat {
    fn default() -> Self {
        PriceFormat {
            date_column: "date".into(),
            open_column: "open".into(),
            close_column: "close".into(),
            date_format: "%Y-%m-%d".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
}

/// Parses a price CSV into records in file order.
///
/// Rejects rows whose open or close is not a positive finite number, and
/// dates that appear more than once. Errors carry the 1-based line number.
pub fn parse_price_csv(bytes: &[u8], format: &PriceFormat) -> Result<Vec<PriceRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (date_ix, open_ix, close_ix) = (
        column(&format.date_column)?,
        column(&format.open_column)?,
        column(&format.close_column)?,
    );

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |ix: usize, name: &str| {
            row.get(ix).ok_or_else(|| IngestError::Malformed {
                line,
                message: format!("missing {name} field"),
            })
        };
        let raw_date = field(date_ix, "date")?;
        let date = NaiveDate::parse_from_str(raw_date, &format.date_format).map_err(|e| {
            IngestError::Malformed { line, message: format!("bad date {raw_date:?}: {e}") }
        })?;
        let price = |ix: usize, name: &'static str| -> Result<f64, IngestError> {
            let raw = field(ix, name)?;
            let value: f64 = raw.parse().map_err(|_| IngestError::Malformed {
                line,
                message: format!("bad {name} price {raw:?}"),
            })?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(IngestError::NonPositive { line, date, field: name, value });
            }
            Ok(value)
        };
        let open = price(open_ix, "open")?;
        let close = price(close_ix, "close")?;
        if !seen.insert(date) {
            return Err(IngestError::DuplicateDate { line, date });
        }
        records.push(PriceRecord { date, open, close });
    }
    Ok(records)
}

/// Writes records as `date,open,close` with ISO dates.
pub fn write_price_csv<W: Write>(out: W, records: &[PriceRecord]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["date", "open", "close"])?;
    for r in records {
        writer.write_record([r.date.to_string(), r.open.to_string(), r.close.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// One security's dated open-to-close log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub series_id: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// `ln(close) − ln(open)` for each record, in date order.
pub fn to_returns(records: &[PriceRecord], series_id: &str) -> ReturnSeries {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.date);
    ReturnSeries {
        series_id: series_id.to_string(),
        dates: sorted.iter().map(|r| r.date).collect(),
        returns: sorted.iter().map(|r| r.close.ln() - r.open.ln()).collect(),
    }
}

/// Writes `date,log_return`.
pub fn write_returns_csv<W: Write>(out: W, series: &ReturnSeries) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["date", "log_return"])?;
    for (d, r) in series.dates.iter().zip(&series.returns) {
        writer.write_record([d.to_string(), r.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_returns_csv(bytes: &[u8], series_id: &str) -> Result<ReturnSeries, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
        log_return: f64,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut rows = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| IngestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        rows.push((row.date, row.log_return));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate { line: 0, date: w[0].0 });
    }
    Ok(ReturnSeries {
        series_id: series_id.to_string(),
        dates: rows.iter().map(|r| r.0).collect(),
        returns: rows.iter().map(|r| r.1).collect(),
    })
}

/// Inclusive date bounds; `None` leaves a side open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl DateWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from.is_none_or(|f| date >= f) && self.to.is_none_or(|t| date <= t)
    }
}

impl FromStr for DateWindow {
    type Err = IngestError;

    /// `FROM:TO`, e.g. `2000-01-04:2010-12-14`, `:2010-12-14` or `2004-06-01:`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::BadWindow(s.to_string());
        let (from, to) = s.split_once(':').ok_or_else(bad)?;
        let parse = |part: &str| -> Result<Option<NaiveDate>, IngestError> {
            let part = part.trim();
            if part.is_empty() {
                Ok(None)
            } else {
                part.parse().map(Some).map_err(|_| bad())
            }
        };
        let window = DateWindow { from: parse(from)?, to: parse(to)? };
        if let (Some(f), Some(t)) = (window.from, window.to) {
            if f > t {
                return Err(bad());
            }
        }
        Ok(window)
    }
}

/// What to do with series that lack some calendar days.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoveragePolicy {
    /// Reject any series missing a calendar day.
    #[default]
    Strict,
    /// Fill missing days with a zero return. Exploratory only: it plants
    /// artificial low-variance stretches in the filled series.
    FillZero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub window: DateWindow,
    pub policy: CoveragePolicy,
}

/// Series aligned on one shared calendar, ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub calendar: Vec<NaiveDate>,
    pub series: Vec<ReturnSeries>,
}

impl Panel {
    /// The panel restricted to calendar days on or before `last`.
    pub fn truncated(&self, last: NaiveDate) -> Panel {
        let keep = self.calendar.partition_point(|d| *d <= last);
        Panel {
            calendar: self.calendar[..keep].to_vec(),
            series: self
                .series
                .iter()
                .map(|s| ReturnSeries {
                    series_id: s.series_id.clone(),
                    dates: s.dates[..keep].to_vec(),
                    returns: s.returns[..keep].to_vec(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSeries {
    pub series_id: String,
    pub missing_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub panel: Panel,
    pub rejected: Vec<RejectedSeries>,
}

/// Builds the shared calendar (sorted union of all in-window dates) and
/// aligns every series on it according to the coverage policy.
pub fn align_panel(series: Vec<ReturnSeries>, options: &AlignOptions) -> Result<Alignment, IngestError> {
    let mut by_id: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for s in series {
        let points = s
            .dates
            .iter()
            .zip(&s.returns)
            .filter(|(d, _)| options.window.contains(**d))
            .map(|(d, r)| (*d, *r))
            .collect();
        if by_id.insert(s.series_id.clone(), points).is_some() {
            return Err(IngestError::DuplicateSeries(s.series_id));
        }
    }
    let calendar: Vec<NaiveDate> = by_id
        .values()
        .flat_map(|points| points.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if calendar.is_empty() {
        return Err(IngestError::EmptyWindow);
    }

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (series_id, points) in by_id {
        let missing = calendar.len() - points.len();
        if missing > 0 && options.policy == CoveragePolicy::Strict {
            rejected.push(RejectedSeries { series_id, missing_days: missing });
            continue;
        }
        let returns = calendar.iter().map(|d| points.get(d).copied().unwrap_or(0.0)).collect();
        accepted.push(ReturnSeries { series_id, dates: calendar.clone(), returns });
    }
    Ok(Alignment { panel: Panel { calendar, series: accepted }, rejected })
}

/// Series id for a price file: its file-name stem.
pub fn series_id_from_path(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Reads a manifest of newline-separated file paths. Blank lines and lines
/// starting with `#` are skipped; relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        })
        .collect())
}

/// Reads and parses one price file into a return series named after it.
pub fn load_price_file(path: &Path, format: &PriceFormat) -> Result<ReturnSeries, IngestError> {
    let bytes = std::fs::read(path)?;
    let records = parse_price_csv(&bytes, format)?;
    Ok(to_returns(&records, &series_id_from_path(path)))
}
