use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use volregime::aggregate::QuintileRule;
use volregime::ingest::{CoveragePolicy, DateWindow, PriceFormat};
use volregime::segmentation::{DEFAULT_DOF, DEFAULT_MIN_SEG_LEN};
use volregime::synthetic::{Piece, PiecewiseSpec};
use volregime::{SegmentationConfig, Threshold, ThresholdConvention};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "volregime", version, about = "Segment return series into volatility regimes")]
pub struct Cli {
    /// Worker threads for per-series work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a piecewise Gaussian series, optionally segment and score it.
    Synth(SynthArgs),
    /// Segment one or more series files.
    Segment(SegmentArgs),
    /// Build the daily quintile panel for a set of securities.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    TwoDelta,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Midpoint,
    Ceil,
}

impl From<RuleArg> for QuintileRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Midpoint => QuintileRule::Midpoint,
            RuleArg::Ceil => QuintileRule::Ceil,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoverageArg {
    Strict,
    FillZero,
}

impl From<CoverageArg> for CoveragePolicy {
    fn from(c: CoverageArg) -> Self {
        match c {
            CoverageArg::Strict => CoveragePolicy::Strict,
            CoverageArg::FillZero => CoveragePolicy::FillZero,
        }
    }
}

/// How to read a series file. `auto` looks at the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Auto,
    /// Daily bars with date, open and close columns.
    Prices,
    /// `date,log_return` tables.
    Returns,
    /// A single `value` column, as written by `synth`.
    Values,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentationArgs {
    /// Significance level of the split test.
    #[arg(long, conflicts_with = "delta_c")]
    pub alpha: Option<f64>,
    /// Threshold on the log likelihood ratio (default 10).
    #[arg(long)]
    pub delta_c: Option<f64>,
    /// Degrees of freedom of the χ² reference distribution.
    #[arg(long, default_value_t = DEFAULT_DOF)]
    pub dof: u32,
    /// Shortest segment a split may produce.
    #[arg(long, default_value_t = DEFAULT_MIN_SEG_LEN)]
    pub min_seg_len: usize,
    #[arg(long, value_enum, default_value_t = ConventionArg::TwoDelta)]
    pub threshold_convention: ConventionArg,
}

impl SegmentationArgs {
    pub fn config(&self) -> Result<SegmentationConfig> {
        let threshold = match (self.alpha, self.delta_c) {
            (Some(a), _) => Threshold::Alpha(a),
            (None, Some(d)) => Threshold::DeltaC(d),
            (None, None) => Threshold::DeltaC(volregime::segmentation::DEFAULT_DELTA_C),
        };
        let convention = match self.threshold_convention {
            ConventionArg::TwoDelta => ThresholdConvention::TwoDelta,
            ConventionArg::PaperLiteral => ThresholdConvention::PaperLiteral,
        };
        SegmentationConfig::new(threshold, convention, self.dof, self.min_seg_len)
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct PriceColumns {
    #[arg(long, default_value = "date")]
    pub date_col: String,
    #[arg(long, default_value = "open")]
    pub open_col: String,
    #[arg(long, default_value = "close")]
    pub close_col: String,
    /// strftime pattern of the date column.
    #[arg(long, default_value = "%Y-%m-%d")]
    pub date_format: String,
}

impl PriceColumns {
    pub fn format(&self) -> PriceFormat {
        PriceFormat {
            date_column: self.date_col.clone(),
            open_column: self.open_col.clone(),
            close_column: self.close_col.clone(),
            date_format: self.date_format.clone(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input files.
    pub inputs: Vec<PathBuf>,
    /// File listing input paths, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Keep only dates inside FROM:TO (ISO dates, either side may be empty).
    #[arg(long, value_parser = parse_window)]
    pub window: Option<DateWindow>,
    /// Stop at the first file that fails to load.
    #[arg(long)]
    pub fail_fast: bool,
    #[command(flatten)]
    pub columns: PriceColumns,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Comma-separated LEN:MEAN:STD pieces (default: four pieces of 500 with std 1,2,1,3).
    #[arg(long, value_parser = parse_pieces)]
    pub pieces: Option<PieceList>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score this many replicates with seeds seed, seed+1, ...
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Also segment the generated series and score boundary recovery.
    #[arg(long)]
    pub segment: bool,
    /// Boundary matching tolerance, in observations.
    #[arg(long, default_value_t = 30)]
    pub tol: usize,
    /// Largest relative std error for a replicate to count as recovered.
    #[arg(long, default_value_t = 0.10)]
    pub param_tol: f64,
    #[command(flatten)]
    pub segmentation: SegmentationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl SynthArgs {
    pub fn spec(&self) -> Result<PiecewiseSpec> {
        match &self.pieces {
            Some(p) => Ok(PiecewiseSpec::new(p.0.clone(), self.seed)?),
            None => Ok(PiecewiseSpec::four_regime(self.seed)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = InputKind::Auto)]
    pub input_kind: InputKind,
    #[command(flatten)]
    pub segmentation: SegmentationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Use precomputed segment tables instead of price files.
    #[arg(long, num_args = 1.., conflicts_with_all = ["inputs", "manifest", "compare_window"], requires = "calendar")]
    pub segments: Vec<PathBuf>,
    /// Trading calendar for segment tables: a CSV with a `date` column.
    #[arg(long)]
    pub calendar: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CoverageArg::Strict)]
    pub coverage: CoverageArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Midpoint)]
    pub quintile_rule: RuleArg,
    /// Also write calendar-month averages.
    #[arg(long)]
    pub monthly: bool,
    /// Re-run on the calendar truncated at DATE and report agreement.
    #[arg(long)]
    pub compare_window: Option<NaiveDate>,
    /// Days before the truncation date excluded from the headline agreement.
    #[arg(long, default_value_t = 100)]
    pub margin: usize,
    #[command(flatten)]
    pub segmentation: SegmentationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_window(s: &str) -> std::result::Result<DateWindow, String> {
    s.parse().map_err(|e: volregime::ingest::IngestError| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceList(pub Vec<Piece>);

fn parse_pieces(s: &str) -> std::result::Result<PieceList, String> {
    s.split(',')
        .map(|p| p.parse().map_err(|e: volregime::synthetic::SpecError| e.to_string()))
        .collect::<std::result::Result<_, _>>()
        .map(PieceList)
}
