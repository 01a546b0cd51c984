//! Cross-sectional volatility indicators.
//!
//! Each series' segments are ranked by standard deviation and labeled with a
//! quintile 1 (calmest) to 5 (most volatile) relative to that series' own
//! segments. Counting, per day, how many series sit in each quintile gives
//! the quintile panel; counting segment starts per day gives the change-point
//! intensity.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::{Segment, SegmentForest};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("series {series_id:?}: no segment covers {date}")]
    Uncovered { series_id: String, date: NaiveDate },
    #[error("series {series_id:?}: segments overlap or are out of order at index {index}")]
    Overlap { series_id: String, index: usize },
    #[error("series {series_id:?}: segments extend past the calendar ({end} > {days} days)")]
    PastCalendar { series_id: String, end: usize, days: usize },
    #[error("truncated calendar is not a prefix of the full calendar (first difference at day {0})")]
    NotPrefix(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mapping from a 1-based rank among `m` segments to a quintile label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuintileRule {
    /// `ceil(5·(rank − ½)/m)`: the rank's midpoint decides the quintile, so
    /// a lone segment lands in the neutral class 3.
    #[default]
    Midpoint,
    /// `ceil(5·rank/m)`.
    Ceil,
}

impl QuintileRule {
    pub fn label(self, rank: usize, m: usize) -> u8 {
        debug_assert!(rank >= 1 && rank <= m);
        let q = match self {
            // ceil(5(2r − 1) / 2m) in integers
            QuintileRule::Midpoint => (5 * (2 * rank - 1)).div_ceil(2 * m),
            QuintileRule::Ceil => (5 * rank).div_ceil(m),
        };
        q as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub series_id: String,
    pub segment: Segment,
    /// 1-based rank of the segment's std among the series' segments.
    pub rank: usize,
    pub quintile: u8,
}

/// Labels every segment of `forest`, returned in index order.
///
/// Ranks ascend with std; equal stds rank the earlier segment lower.
pub fn quintile_label(series_id: &str, forest: &SegmentForest, rule: QuintileRule) -> Vec<LabeledSegment> {
    let m = forest.segments.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Segments are in index order, so a stable sort keeps earlier starts first on ties.
    order.sort_by(|&a, &b| forest.segments[a].std().total_cmp(&forest.segments[b].std()));
    let mut ranks = vec![0; m];
    for (pos, &ix) in order.iter().enumerate() {
        ranks[ix] = pos + 1;
    }
    forest
        .segments
        .iter()
        .zip(ranks)
        .map(|(segment, rank)| LabeledSegment {
            series_id: series_id.to_string(),
            segment: segment.clone(),
            rank,
            quintile: rule.label(rank, m),
        })
        .collect()
}

/// Per-day quintile occupancy and segment-start counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintilePanel {
    pub calendar: Vec<NaiveDate>,
    /// `counts[day][k − 1]`: series whose segment covering `day` has quintile `k`.
    pub counts: Vec<[u32; 5]>,
    /// Segments whose first day is `day`.
    pub start_counts: Vec<u32>,
    pub n_series: usize,
}

impl QuintilePanel {
    fn empty(calendar: &[NaiveDate]) -> Self {
        QuintilePanel {
            calendar: calendar.to_vec(),
            counts: vec![[0; 5]; calendar.len()],
            start_counts: vec![0; calendar.len()],
            n_series: 0,
        }
    }

    fn merge(mut self, other: QuintilePanel) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for k in 0..5 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.start_counts.iter_mut().zip(&other.start_counts) {
            *a += b;
        }
        self.n_series += other.n_series;
        self
    }

    fn add_series(mut self, labeled: &[LabeledSegment]) -> Result<Self, AggregateError> {
        let days = self.calendar.len();
        let series_id = labeled.first().map_or_else(String::new, |l| l.series_id.clone());
        let mut cursor = 0;
        for (index, l) in labeled.iter().enumerate() {
            let seg = &l.segment;
            if seg.start > cursor && cursor < days {
                return Err(AggregateError::Uncovered { series_id, date: self.calendar[cursor] });
            }
            if seg.start < cursor || seg.end <= seg.start {
                return Err(AggregateError::Overlap { series_id, index });
            }
            if seg.end > days {
                return Err(AggregateError::PastCalendar { series_id, end: seg.end, days });
            }
            let k = usize::from(l.quintile.clamp(1, 5)) - 1;
            for day in &mut self.counts[seg.start..seg.end] {
                day[k] += 1;
            }
            self.start_counts[seg.start] += 1;
            cursor = seg.end;
        }
        if cursor < days {
            return Err(AggregateError::Uncovered { series_id, date: self.calendar[cursor] });
        }
        self.n_series += 1;
        Ok(self)
    }

    /// Σ_k counts for each day.
    pub fn totals(&self) -> Vec<u32> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }
}

/// Counts, per calendar day, the series in each quintile. Every series'
/// segments must tile the whole calendar.
///
/// Series are reduced in parallel; the result does not depend on their order.
pub fn daily_counts(
    labeled: &[Vec<LabeledSegment>],
    calendar: &[NaiveDate],
) -> Result<QuintilePanel, AggregateError> {
    labeled
        .par_iter()
        .try_fold(|| QuintilePanel::empty(calendar), |acc, series| acc.add_series(series))
        .try_reduce(|| QuintilePanel::empty(calendar), |a, b| Ok(a.merge(b)))
}

/// Writes `date,q1,q2,q3,q4,q5,starts`.
pub fn write_panel_csv<W: Write>(out: W, panel: &QuintilePanel) -> Result<(), AggregateError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["date", "q1", "q2", "q3", "q4", "q5", "starts"])?;
    for ((date, counts), starts) in panel.calendar.iter().zip(&panel.counts).zip(&panel.start_counts) {
        let mut row = vec![date.to_string()];
        row.extend(counts.iter().map(u32::to_string));
        row.push(starts.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Calendar-month roll-up: quintile counts averaged over the month's days,
/// segment starts summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub year: i32,
    pub month: u32,
    pub days: usize,
    pub mean_counts: [f64; 5],
    pub starts: u32,
}

pub fn monthly(panel: &QuintilePanel) -> Vec<MonthlyRow> {
    let mut rows: Vec<MonthlyRow> = Vec::new();
    let mut sums = [0u64; 5];
    for (i, date) in panel.calendar.iter().enumerate() {
        let key = (date.year(), date.month());
        if rows.last().is_none_or(|r| (r.year, r.month) != key) {
            finish_month(rows.last_mut(), &mut sums);
            rows.push(MonthlyRow { year: key.0, month: key.1, days: 0, mean_counts: [0.0; 5], starts: 0 });
        }
        let row = rows.last_mut().expect("pushed above");
        row.days += 1;
        row.starts += panel.start_counts[i];
        for (sum, &c) in sums.iter_mut().zip(&panel.counts[i]) {
            *sum += u64::from(c);
        }
    }
    finish_month(rows.last_mut(), &mut sums);
    rows
}

fn finish_month(row: Option<&mut MonthlyRow>, sums: &mut [u64; 5]) {
    if let Some(row) = row {
        for (mean, &sum) in row.mean_counts.iter_mut().zip(sums.iter()) {
            *mean = sum as f64 / row.days as f64;
        }
    }
    *sums = [0; 5];
}

/// Writes `month,days,q1,q2,q3,q4,q5,starts` with `month` as `YYYY-MM`.
pub fn write_monthly_csv<W: Write>(out: W, rows: &[MonthlyRow]) -> Result<(), AggregateError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["month", "days", "q1", "q2", "q3", "q4", "q5", "starts"])?;
    for r in rows {
        let mut rec = vec![format!("{:04}-{:02}", r.year, r.month), r.days.to_string()];
        rec.extend(r.mean_counts.iter().map(f64::to_string));
        rec.push(r.starts.to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayDistance {
    pub date: NaiveDate,
    pub l1: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub shared_days: usize,
    pub mean_l1: f64,
    pub max_l1: u32,
    pub equal_fraction: f64,
}

impl AgreementSummary {
    pub fn of(days: &[DayDistance]) -> Self {
        let n = days.len();
        let total: u64 = days.iter().map(|d| u64::from(d.l1)).sum();
        let equal = days.iter().filter(|d| d.l1 == 0).count();
        AgreementSummary {
            shared_days: n,
            mean_l1: if n == 0 { 0.0 } else { total as f64 / n as f64 },
            max_l1: days.iter().map(|d| d.l1).max().unwrap_or(0),
            equal_fraction: if n == 0 { 1.0 } else { equal as f64 / n as f64 },
        }
    }
}

/// Day-by-day agreement between a full-window panel and one computed on a
/// prefix of its calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_day: Vec<DayDistance>,
    pub summary: AgreementSummary,
}

impl AgreementReport {
    /// Summary restricted to shared days strictly before `cutoff`.
    pub fn summary_before(&self, cutoff: NaiveDate) -> AgreementSummary {
        let end = self.per_day.partition_point(|d| d.date < cutoff);
        AgreementSummary::of(&self.per_day[..end])
    }
}

pub fn compare_windows(full: &QuintilePanel, truncated: &QuintilePanel) -> Result<AgreementReport, AggregateError> {
    let shared = truncated.calendar.len();
    if shared > full.calendar.len() {
        return Err(AggregateError::NotPrefix(full.calendar.len()));
    }
    if let Some(i) = (0..shared).find(|&i| full.calendar[i] != truncated.calendar[i]) {
        return Err(AggregateError::NotPrefix(i));
    }
    let per_day: Vec<DayDistance> = (0..shared)
        .map(|i| DayDistance {
            date: full.calendar[i],
            l1: full.counts[i].iter().zip(&truncated.counts[i]).map(|(a, b)| a.abs_diff(*b)).sum(),
        })
        .collect();
    let summary = AgreementSummary::of(&per_day);
    Ok(AgreementReport { per_day, summary })
}
