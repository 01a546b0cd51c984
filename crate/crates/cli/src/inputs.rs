//! Locating, reading and parsing series files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use volregime::ingest::{parse_price_csv, read_manifest, read_returns_csv, series_id_from_path, DateWindow, PriceFormat};

use crate::args::{InputArgs, InputKind};
use crate::error::{Class, CliError, Result};
use crate::manifest::{Failure, InputDigest};

/// A parsed input file. Value-only files carry no dates.
#[derive(Debug, Clone)]
pub struct LoadedSeries {
    pub series_id: String,
    pub path: PathBuf,
    pub dates: Option<Vec<NaiveDate>>,
    pub values: Vec<f64>,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Positional inputs followed by manifest entries. The manifest itself is
/// digested into `digests`.
pub fn collect_paths(args: &InputArgs, digests: &mut Vec<InputDigest>) -> Result<Vec<PathBuf>> {
    let mut paths = args.inputs.clone();
    if let Some(manifest) = &args.manifest {
        digests.push(InputDigest::of(manifest, &read_file(manifest)?));
        paths.extend(read_manifest(manifest).map_err(|e| CliError::from(e).in_file(manifest))?);
    }
    if paths.is_empty() {
        return Err(CliError::usage("no input files given"));
    }
    Ok(paths)
}

fn detect(header: &str, format: &PriceFormat) -> Option<InputKind> {
    let fields: Vec<String> = header.split(',').map(|f| f.trim().to_ascii_lowercase()).collect();
    let has = |name: &str| fields.iter().any(|f| *f == name.to_ascii_lowercase());
    if has(&format.close_column) && has(&format.open_column) {
        Some(InputKind::Prices)
    } else if has("log_return") {
        Some(InputKind::Returns)
    } else if fields == ["value"] {
        Some(InputKind::Values)
    } else {
        None
    }
}

fn parse_values(bytes: &[u8]) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::validation(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(0).unwrap_or("");
        match field.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return Err(CliError::validation(format!("line {line}: not a finite number: {field:?}"))),
        }
    }
    Ok(out)
}

fn load_one(path: &Path, kind: InputKind, format: &PriceFormat, window: Option<DateWindow>) -> Result<(LoadedSeries, InputDigest)> {
    let bytes = std::fs::read(path).map_err(|e| CliError { class: Class::Io, message: e.to_string() })?;
    let digest = InputDigest::of(path, &bytes);
    let series_id = series_id_from_path(path);
    let kind = match kind {
        InputKind::Auto => {
            let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
            let header = String::from_utf8_lossy(header);
            detect(header.trim_start_matches('\u{feff}'), format).ok_or_else(|| {
                CliError::validation(format!("line 1: cannot tell the input kind from header {:?}", header.trim()))
            })?
        }
        k => k,
    };
    let (dates, values) = match kind {
        InputKind::Values => {
            if window.is_some() {
                return Err(CliError::usage("--window needs dated input"));
            }
            (None, parse_values(&bytes)?)
        }
        InputKind::Prices => {
            let records = parse_price_csv(&bytes, format)?;
            let r = volregime::ingest::to_returns(&records, &series_id);
            (Some(r.dates), r.returns)
        }
        InputKind::Returns => {
            let r = read_returns_csv(&bytes, &series_id)?;
            (Some(r.dates), r.returns)
        }
        InputKind::Auto => unreachable!("resolved above"),
    };
    let (dates, values) = match (dates, window) {
        (Some(d), Some(w)) => {
            let (d, v): (Vec<NaiveDate>, Vec<f64>) =
                d.into_iter().zip(values).filter(|(date, _)| w.contains(*date)).unzip();
            if v.is_empty() {
                return Err(volregime::ingest::IngestError::EmptyWindow.into());
            }
            (Some(d), v)
        }
        (d, _) => (d, values),
    };
    Ok((LoadedSeries { series_id, path: path.to_path_buf(), dates, values }, digest))
}

pub struct Loaded {
    pub series: Vec<LoadedSeries>,
    pub digests: Vec<InputDigest>,
    pub failures: Vec<Failure>,
}

/// Loads every file in parallel. Failures are collected per file; with
/// `fail_fast` the first one (in input order) is returned as an error.
pub fn load_all(paths: &[PathBuf], kind: InputKind, args: &InputArgs) -> Result<Loaded> {
    let format = args.columns.format();
    let results: Vec<Result<(LoadedSeries, InputDigest)>> = paths
        .par_iter()
        .map(|p| load_one(p, kind, &format, args.window).map_err(|e| e.in_file(p)))
        .collect();
    let mut loaded = Loaded { series: Vec::new(), digests: Vec::new(), failures: Vec::new() };
    let mut seen = BTreeSet::new();
    for (path, result) in paths.iter().zip(results) {
        let outcome = result.and_then(|(s, d)| {
            if seen.insert(s.series_id.clone()) {
                Ok((s, d))
            } else {
                Err(CliError::validation(format!("duplicate series id {:?}", s.series_id)).in_file(path))
            }
        });
        match outcome {
            Ok((s, d)) => {
                loaded.series.push(s);
                loaded.digests.push(d);
            }
            Err(e) if args.fail_fast => return Err(e),
            Err(e) => loaded.failures.push(Failure { path: path.display().to_string(), error: e.message, class: e.class }),
        }
    }
    Ok(loaded)
}
