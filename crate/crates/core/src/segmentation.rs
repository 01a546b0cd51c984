//! Recursive binary segmentation of a scalar series into Gaussian regimes.
//!
//! For a candidate cut `t` of a range of length `n`, the log likelihood ratio
//! between a two-Gaussian model (left `[0,t)`, right `[t,n)`) and a single
//! Gaussian, with all parameters at their maximum-likelihood values, is
//!
//! ```text
//! Δ(t) = n·ln σ − t·ln σ_L − (n−t)·ln σ_R
//! ```
//!
//! The best cut maximises Δ. It is accepted when Δ exceeds the configured
//! threshold, after which both halves are segmented again. `2Δ` is
//! asymptotically χ²(k) under the single-Gaussian null, which is how the
//! threshold relates to a significance level.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, gaussian_entropy, mle_fit, GaussianParams, StatsError};

pub const DEFAULT_DELTA_C: f64 = 10.0;
pub const DEFAULT_DOF: u32 = 2;
pub const DEFAULT_MIN_SEG_LEN: usize = 25;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("invalid segmentation config: {0}")]
    Config(String),
    #[error("split at t={t} leaves a side with zero variance")]
    Degenerate { t: usize },
    #[error("split position t={t} outside (0, {n})")]
    SplitOutOfRange { t: usize, n: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("segment table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// How the stopping threshold was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Significance level of the χ² test.
    Alpha(f64),
    /// Threshold on the log likelihood ratio Δ itself.
    DeltaC(f64),
}

/// Relation between Δ_c and α.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdConvention {
    /// `2·Δ_c = χ²⁻¹(α, k)`: the split statistic `2Δ` is compared against the
    /// χ² quantile. With k = 2, Δ_c = 10 corresponds to α = 1 − e⁻¹⁰.
    #[default]
    TwoDelta,
    /// `Δ_c = χ²⁻¹(α, k)` (for k = 2, `Δ_c = −2 ln(1−α)`), comparing Δ
    /// directly against the quantile.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RawConfig {
    threshold: Threshold,
    #[serde(default)]
    convention: ThresholdConvention,
    dof: u32,
    min_seg_len: usize,
}

/// Validated segmentation parameters. The threshold is stored as supplied
/// and resolved once into both Δ_c and α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "ResolvedConfig")]
pub struct SegmentationConfig {
    raw: RawConfig,
    delta_c: f64,
    alpha: f64,
}

#[derive(Serialize)]
struct ResolvedConfig {
    threshold: Threshold,
    convention: ThresholdConvention,
    dof: u32,
    min_seg_len: usize,
    delta_c: f64,
    alpha: f64,
}

impl From<SegmentationConfig> for ResolvedConfig {
    fn from(c: SegmentationConfig) -> Self {
        ResolvedConfig {
            threshold: c.raw.threshold,
            convention: c.raw.convention,
            dof: c.raw.dof,
            min_seg_len: c.raw.min_seg_len,
            delta_c: c.delta_c,
            alpha: c.alpha,
        }
    }
}

impl TryFrom<RawConfig> for SegmentationConfig {
    type Error = SegmentationError;

    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        if raw.min_seg_len < 2 {
            return Err(SegmentationError::Config(format!(
                "min_seg_len must be at least 2, got {}",
                raw.min_seg_len
            )));
        }
        let chi2 = stats::ChiSquared::new(raw.dof)
            .map_err(|e| SegmentationError::Config(e.to_string()))?;
        // Scale between Δ and the χ² statistic.
        let scale = match raw.convention {
            ThresholdConvention::TwoDelta => 2.0,
            ThresholdConvention::PaperLiteral => 1.0,
        };
        let (delta_c, alpha) = match raw.threshold {
            Threshold::DeltaC(d) => {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(SegmentationError::Config(format!(
                        "delta_c must be positive and finite, got {d}"
                    )));
                }
                (d, chi2.cdf(scale * d)?)
            }
            Threshold::Alpha(a) => {
                if !(a > 0.0 && a < 1.0) {
                    return Err(SegmentationError::Config(format!(
                        "alpha must lie in (0, 1), got {a}"
                    )));
                }
                (chi2.inv_cdf(a)? / scale, a)
            }
        };
        Ok(SegmentationConfig { raw, delta_c, alpha })
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig::new(
            Threshold::DeltaC(DEFAULT_DELTA_C),
            ThresholdConvention::TwoDelta,
            DEFAULT_DOF,
            DEFAULT_MIN_SEG_LEN,
        )
        .expect("default config is valid")
    }
}

impl SegmentationConfig {
    pub fn new(
        threshold: Threshold,
        convention: ThresholdConvention,
        dof: u32,
        min_seg_len: usize,
    ) -> Result<Self, SegmentationError> {
        RawConfig { threshold, convention, dof, min_seg_len }.try_into()
    }

    /// Default config with the given Δ_c.
    pub fn with_delta_c(delta_c: f64) -> Result<Self, SegmentationError> {
        Self::new(
            Threshold::DeltaC(delta_c),
            ThresholdConvention::TwoDelta,
            DEFAULT_DOF,
            DEFAULT_MIN_SEG_LEN,
        )
    }

    pub fn with_min_seg_len(self, min_seg_len: usize) -> Result<Self, SegmentationError> {
        RawConfig { min_seg_len, ..self.raw }.try_into()
    }

    pub fn threshold(&self) -> Threshold {
        self.raw.threshold
    }

    pub fn convention(&self) -> ThresholdConvention {
        self.raw.convention
    }

    pub fn dof(&self) -> u32 {
        self.raw.dof
    }

    pub fn min_seg_len(&self) -> usize {
        self.raw.min_seg_len
    }

    /// Threshold on Δ: a split is accepted iff `max Δ > delta_c`.
    pub fn delta_c(&self) -> f64 {
        self.delta_c
    }

    /// Significance level matching `delta_c` under the configured convention.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The χ² critical value the split statistic is compared against.
    pub fn critical_value(&self) -> f64 {
        match self.raw.convention {
            ThresholdConvention::TwoDelta => 2.0 * self.delta_c,
            ThresholdConvention::PaperLiteral => self.delta_c,
        }
    }

    pub fn accepts(&self, max_delta: f64) -> bool {
        max_delta > self.delta_c
    }
}

/// A finalized stationary segment `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub params: GaussianParams,
    /// Best Δ found when this range was scanned; `None` if the range was too
    /// short to scan or had no admissible cut.
    pub max_delta: Option<f64>,
    pub depth: u32,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn std(&self) -> f64 {
        self.params.std()
    }
}

/// An accepted cut of `[start, end)` at `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub start: usize,
    pub end: usize,
    pub at: usize,
    pub max_delta: f64,
    pub depth: u32,
}

/// Segments of one series in index order, plus the accepted splits that
/// produced them in the order they were made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentForest {
    pub segments: Vec<Segment>,
    pub splits: Vec<Split>,
    pub series_len: usize,
    pub config: SegmentationConfig,
}

impl SegmentForest {
    /// Interior change points (start indices of all segments but the first).
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// True when the segments tile `[0, series_len)` with no gap or overlap.
    pub fn is_partition(&self) -> bool {
        let mut cursor = 0;
        for s in &self.segments {
            if s.start != cursor || s.end <= s.start {
                return false;
            }
            cursor = s.end;
        }
        cursor == self.series_len && (self.series_len > 0 || self.segments.is_empty())
    }
}

/// Prefix sums of `x − x₀` and `(x − x₀)²` over a window.
struct PrefixMoments {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl PrefixMoments {
    fn new(xs: &[f64]) -> Self {
        let shift = xs.first().copied().unwrap_or(0.0);
        let mut s1 = Vec::with_capacity(xs.len() + 1);
        let mut s2 = Vec::with_capacity(xs.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(a);
        s2.push(b);
        for &x in xs {
            let d = x - shift;
            a += d;
            b += d * d;
            s1.push(a);
            s2.push(b);
        }
        PrefixMoments { s1, s2 }
    }

    /// `ln σ²` over `[from, to)`, or `None` when the variance is zero up to
    /// the rounding noise of the prefix sums.
    fn ln_variance(&self, from: usize, to: usize) -> Option<f64> {
        let n = (to - from) as f64;
        let m1 = (self.s1[to] - self.s1[from]) / n;
        let m2 = (self.s2[to] - self.s2[from]) / n;
        let var = m2 - m1 * m1;
        let noise = 4.0 * f64::EPSILON * n * m2;
        (var > noise && var > 0.0).then(|| var.ln())
    }
}

/// Δ(t) for every `t` in `0..=xs.len()`.
///
/// Positions outside `[min_seg_len, n − min_seg_len]`, and positions where
/// either side has zero variance, are `None`. A series with zero total
/// variance, or shorter than `2·min_seg_len`, yields an all-`None` profile.
pub fn delta_profile(xs: &[f64], min_seg_len: usize) -> Vec<Option<f64>> {
    let n = xs.len();
    let mut profile = vec![None; n + 1];
    let min_seg_len = min_seg_len.max(1);
    if n < 2 * min_seg_len {
        return profile;
    }
    let moments = PrefixMoments::new(xs);
    let Some(ln_var) = moments.ln_variance(0, n) else {
        return profile;
    };
    let whole = n as f64 * ln_var;
    for (t, slot) in profile.iter_mut().enumerate().take(n - min_seg_len + 1).skip(min_seg_len) {
        let (Some(left), Some(right)) = (moments.ln_variance(0, t), moments.ln_variance(t, n))
        else {
            continue;
        };
        let delta = 0.5 * (whole - t as f64 * left - (n - t) as f64 * right);
        *slot = Some(delta.max(0.0));
    }
    profile
}

/// Position and value of the profile maximum; the earliest index wins ties.
pub fn best_split(profile: &[Option<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, value) in profile.iter().enumerate() {
        if let Some(v) = *value {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
    }
    best
}

/// Δ(t) evaluated as a weighted difference of Gaussian entropies:
/// `n·H(σ²) − t·H(σ_L²) − (n−t)·H(σ_R²)`.
pub fn entropy_form_delta(xs: &[f64], t: usize) -> Result<f64, SegmentationError> {
    let n = xs.len();
    if t == 0 || t >= n {
        return Err(SegmentationError::SplitOutOfRange { t, n });
    }
    let entropy = |from, to| -> Result<f64, SegmentationError> {
        let p = mle_fit(xs, from, to)?;
        gaussian_entropy(p.variance).map_err(|_| SegmentationError::Degenerate { t })
    };
    let whole = entropy(0, n)?;
    let left = entropy(0, t)?;
    let right = entropy(t, n)?;
    Ok(n as f64 * whole - t as f64 * left - (n - t) as f64 * right)
}

/// Recursively segments `xs`, depth first, until no best cut exceeds the
/// threshold. Segments are returned in index order.
///
/// A series shorter than `2·min_seg_len` comes back as a single segment
/// (which may then be shorter than `min_seg_len` itself). An empty series
/// yields an empty forest.
pub fn recursive_segment(xs: &[f64], config: &SegmentationConfig) -> SegmentForest {
    let n = xs.len();
    let mut segments = Vec::new();
    let mut splits = Vec::new();
    if n == 0 {
        return SegmentForest { segments, splits, series_len: 0, config: *config };
    }

    let min_len = config.min_seg_len();
    // Explicit stack so very long series cannot exhaust the call stack.
    let mut pending = vec![(0usize, n, 0u32)];
    while let Some((start, end, depth)) = pending.pop() {
        let window = &xs[start..end];
        let best = if window.len() >= 2 * min_len {
            best_split(&delta_profile(window, min_len))
        } else {
            None
        };
        match best {
            Some((t, max_delta)) if config.accepts(max_delta) => {
                let at = start + t;
                splits.push(Split { start, end, at, max_delta, depth });
                pending.push((at, end, depth + 1));
                pending.push((start, at, depth + 1));
            }
            _ => {
                let params = mle_fit(xs, start, end).expect("non-empty range");
                segments.push(Segment {
                    start,
                    end,
                    params,
                    max_delta: best.map(|(_, d)| d),
                    depth,
                });
            }
        }
    }
    segments.sort_by_key(|s| s.start);
    SegmentForest { segments, splits, series_len: n, config: *config }
}

/// Segments several independent series in parallel.
pub fn segment_many<S>(series: &[S], config: &SegmentationConfig) -> Vec<SegmentForest>
where
    S: AsRef<[f64]> + Sync,
{
    series
        .par_iter()
        .map(|xs| recursive_segment(xs.as_ref(), config))
        .collect()
}

/// One row of the segment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub series_id: String,
    pub start: usize,
    pub end: usize,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub mean: f64,
    pub std: f64,
    pub max_delta: Option<f64>,
    pub depth: u32,
}

/// Flattens a forest into table rows. `dates`, when given, must have one
/// entry per series index; `end_date` is the date of the last index covered.
pub fn segment_rows(
    series_id: &str,
    forest: &SegmentForest,
    dates: Option<&[NaiveDate]>,
) -> Result<Vec<SegmentRow>, SegmentationError> {
    if let Some(d) = dates {
        if d.len() != forest.series_len {
            return Err(SegmentationError::Table(format!(
                "calendar has {} dates but series has {} observations",
                d.len(),
                forest.series_len
            )));
        }
    }
    Ok(forest
        .segments
        .iter()
        .map(|s| SegmentRow {
            series_id: series_id.to_string(),
            start: s.start,
            end: s.end,
            start_date: dates.map(|d| d[s.start]),
            end_date: dates.map(|d| d[s.end - 1]),
            mean: s.params.mean,
            std: s.std(),
            max_delta: s.max_delta,
            depth: s.depth,
        })
        .collect())
}

/// Writes rows as CSV with header
/// `series_id,start,end,start_date,end_date,mean,std,max_delta,depth`.
pub fn write_segment_csv<W: Write>(out: W, rows: &[SegmentRow]) -> Result<(), SegmentationError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record([
            "series_id", "start", "end", "start_date", "end_date", "mean", "std", "max_delta",
            "depth",
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_segment_csv<R: Read>(input: R) -> Result<Vec<SegmentRow>, SegmentationError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(SegmentationError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EIGHT: [f64; 8] = [-1.0, 1.0, -1.0, 1.0, -3.0, 3.0, -3.0, 3.0];

    #[test]
    fn eight_point_profile() {
        let profile = delta_profile(&EIGHT, 4);
        assert_eq!(profile.len(), 9);
        assert!(profile.iter().enumerate().all(|(t, v)| (t == 4) == v.is_some()));
        let expected = 4.0 * (5.0f64 / 3.0).ln();
        assert!((profile[4].unwrap() - expected).abs() < 1e-12);
        assert!((profile[4].unwrap() - 2.0433).abs() < 1e-4);
    }

    #[test]
    fn best_split_examples() {
        assert_eq!(best_split(&[None, Some(1.0), Some(3.0), Some(1.0), None]), Some((2, 3.0)));
        assert_eq!(best_split(&[None, Some(2.0), Some(2.0), None]), Some((1, 2.0)));
        assert_eq!(best_split(&[None, None, None]), None);
        assert_eq!(best_split(&[]), None);
    }

    #[test]
    fn profile_excludes_degenerate_sides() {
        let mut xs = vec![0.5; 10];
        xs.extend([1.0, -1.0, 2.0, 0.0, 3.0, -2.0, 1.5, 0.2, 0.9, -0.7]);
        let profile = delta_profile(&xs, 3);
        for t in 3..=10 {
            assert!(profile[t].is_none(), "left side constant at t={t}");
        }
        assert!(profile[11].is_some());
        assert!(delta_profile(&[2.0; 100], 5).iter().all(Option::is_none));
        assert!(delta_profile(&[1.0, 2.0, 3.0], 2).iter().all(Option::is_none));
    }

    #[test]
    fn entropy_form_matches_and_rejects_degenerate() {
        let d = entropy_form_delta(&EIGHT, 4).unwrap();
        assert!((d - 4.0 * (5.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(matches!(entropy_form_delta(&EIGHT, 1), Err(SegmentationError::Degenerate { .. })));
        assert!(matches!(entropy_form_delta(&EIGHT, 0), Err(SegmentationError::SplitOutOfRange { .. })));
        assert!(entropy_form_delta(&EIGHT, 8).is_err());
    }

    #[test]
    fn eight_point_series_stays_whole() {
        let config = SegmentationConfig::with_delta_c(10.0).unwrap().with_min_seg_len(4).unwrap();
        let forest = recursive_segment(&EIGHT, &config);
        assert_eq!(forest.len(), 1);
        let seg = &forest.segments[0];
        assert_eq!((seg.start, seg.end, seg.depth), (0, 8, 0));
        assert!((seg.max_delta.unwrap() - 2.0433).abs() < 1e-4);
        assert!(forest.splits.is_empty());
    }

    #[test]
    fn constant_series_is_one_segment() {
        let forest = recursive_segment(&[0.3; 1000], &SegmentationConfig::default());
        assert_eq!(forest.len(), 1);
        assert_eq!(forest.segments[0].params.variance, 0.0);
        assert_eq!(forest.segments[0].max_delta, None);
        assert!(forest.is_partition());
    }

    #[test]
    fn short_and_empty_series() {
        let config = SegmentationConfig::default();
        let forest = recursive_segment(&[1.0, 2.0, 3.0], &config);
        assert_eq!(forest.len(), 1);
        assert_eq!(forest.segments[0].max_delta, None);
        let forest = recursive_segment(&[], &config);
        assert!(forest.is_empty());
        assert!(forest.is_partition());
    }

    #[test]
    fn obvious_variance_jump_is_found() {
        let xs: Vec<f64> = (0..400)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let wobble = 1.0 + 0.1 * ((i * 7 % 13) as f64);
                sign * wobble * if i < 200 { 1.0 } else { 10.0 }
            })
            .collect();
        let forest = recursive_segment(&xs, &SegmentationConfig::default());
        assert_eq!(forest.boundaries(), vec![200]);
        assert_eq!(forest.splits.len(), 1);
        assert_eq!(forest.splits[0].at, 200);
        assert!(forest.segments.iter().all(|s| s.depth == 1));
    }

    #[test]
    fn config_resolution() {
        let c = SegmentationConfig::default();
        assert_eq!(c.delta_c(), 10.0);
        assert_eq!(c.critical_value(), 20.0);
        assert!((c.alpha() - (1.0 - (-10f64).exp())).abs() < 1e-14);

        let c = SegmentationConfig::new(
            Threshold::Alpha(1.0 - (-10f64).exp()),
            ThresholdConvention::TwoDelta,
            2,
            25,
        )
        .unwrap();
        assert!((c.delta_c() - 10.0).abs() < 1e-9);

        let c = SegmentationConfig::new(Threshold::Alpha(0.99995), ThresholdConvention::PaperLiteral, 2, 25)
            .unwrap();
        assert!((c.delta_c() - (-2.0 * (1.0f64 - 0.99995).ln())).abs() < 1e-8);

        assert!(SegmentationConfig::with_delta_c(0.0).is_err());
        assert!(SegmentationConfig::default().with_min_seg_len(1).is_err());
        assert!(SegmentationConfig::new(Threshold::DeltaC(1.0), ThresholdConvention::TwoDelta, 0, 25).is_err());
        assert!(SegmentationConfig::new(Threshold::Alpha(1.0), ThresholdConvention::TwoDelta, 2, 25).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = SegmentationConfig::new(Threshold::Alpha(0.999), ThresholdConvention::PaperLiteral, 3, 30)
            .unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"delta_c\""));
        let back: SegmentationConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn segment_table_round_trip_with_dates() {
        let xs: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1 + i / 30) as f64).collect();
        let config = SegmentationConfig::default().with_min_seg_len(10).unwrap();
        let forest = recursive_segment(&xs, &config);
        let start = NaiveDate::from_ymd_opt(2011, 3, 1).unwrap();
        let dates: Vec<NaiveDate> = start.iter_days().take(60).collect();
        let rows = segment_rows("7203", &forest, Some(&dates)).unwrap();
        assert_eq!(rows.last().unwrap().end_date, Some(dates[59]));
        let mut buf = Vec::new();
        write_segment_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("series_id,start,end,start_date,end_date,mean,std,max_delta,depth\n"));
        assert_eq!(read_segment_csv(buf.as_slice()).unwrap(), rows);
        assert!(segment_rows("x", &forest, Some(&dates[..10])).is_err());
    }
}
