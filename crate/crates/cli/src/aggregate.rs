use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde_json::json;
use volregime::aggregate::{
    compare_windows, daily_counts, monthly, quintile_label, write_monthly_csv, write_panel_csv, LabeledSegment,
    QuintilePanel, QuintileRule,
};
use volregime::ingest::{align_panel, AlignOptions, Panel, ReturnSeries};
use volregime::segmentation::{read_segment_csv, segment_many, segment_rows, write_segment_csv, SegmentRow};
use volregime::stats::GaussianParams;
use volregime::{Segment, SegmentForest, SegmentationConfig};

use crate::args::{AggregateArgs, Format, InputKind};
use crate::error::{CliError, Result};
use crate::inputs::{collect_paths, load_all, read_file};
use crate::manifest::{failure_class, InputDigest, OutDir, RunManifest};

pub fn run(args: &AggregateArgs) -> Result<()> {
    let config = args.segmentation.config()?;
    let rule: QuintileRule = args.quintile_rule.into();
    let echo = json!({
        "segmentation": config,
        "quintile_rule": rule,
        "coverage": format!("{:?}", args.coverage),
        "window": args.input.window,
        "columns": args.input.columns.format(),
        "compare_window": args.compare_window,
        "margin": args.margin,
        "monthly": args.monthly,
        "from_segment_tables": !args.segments.is_empty(),
        "format": args.output.format,
    });
    let mut out = OutDir::create(&args.output.out, RunManifest::new("aggregate", echo))?;
    let result = if args.segments.is_empty() {
        from_prices(args, &config, rule, &mut out)
    } else {
        from_tables(args, &config, rule, &mut out)
    };
    out.finish()?;
    result
}

fn label_all(ids: &[&str], forests: &[SegmentForest], rule: QuintileRule) -> Vec<Vec<LabeledSegment>> {
    ids.iter().zip(forests).map(|(id, f)| quintile_label(id, f, rule)).collect()
}

fn segment_panel(panel: &Panel, config: &SegmentationConfig, rule: QuintileRule) -> Result<(Vec<SegmentForest>, QuintilePanel)> {
    let values: Vec<&[f64]> = panel.series.iter().map(|s| s.returns.as_slice()).collect();
    let forests = segment_many(&values, config);
    let ids: Vec<&str> = panel.series.iter().map(|s| s.series_id.as_str()).collect();
    let counts = daily_counts(&label_all(&ids, &forests, rule), &panel.calendar)?;
    Ok((forests, counts))
}

fn write_panel(out: &mut OutDir, name: &str, panel: &QuintilePanel, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut bytes = Vec::new();
            write_panel_csv(&mut bytes, panel)?;
            out.write(&format!("{name}.csv"), &bytes)
        }
        Format::Json => out.write_json(&format!("{name}.json"), panel),
    }
}

fn write_outputs(args: &AggregateArgs, out: &mut OutDir, panel: &QuintilePanel, rows: &[SegmentRow]) -> Result<()> {
    write_panel(out, "quintiles", panel, args.output.format)?;
    match args.output.format {
        Format::Csv => {
            let mut bytes = Vec::new();
            write_segment_csv(&mut bytes, rows)?;
            out.write("segments.csv", &bytes)?;
        }
        Format::Json => out.write_json("segments.json", &rows)?,
    }
    if args.monthly {
        let months = monthly(panel);
        match args.output.format {
            Format::Csv => {
                let mut bytes = Vec::new();
                write_monthly_csv(&mut bytes, &months)?;
                out.write("monthly.csv", &bytes)?;
            }
            Format::Json => out.write_json("monthly.json", &months)?,
        }
    }
    Ok(())
}

fn from_prices(args: &AggregateArgs, config: &SegmentationConfig, rule: QuintileRule, out: &mut OutDir) -> Result<()> {
    let mut digests = Vec::new();
    let paths = collect_paths(&args.input, &mut digests)?;
    let loaded = load_all(&paths, InputKind::Auto, &args.input);
    let loaded = match loaded {
        Ok(l) => l,
        Err(e) => {
            out.manifest.inputs = digests;
            return Err(e);
        }
    };
    digests.extend(loaded.digests);
    out.manifest.inputs = digests;
    if let Some(class) = failure_class(&loaded.failures) {
        for f in &loaded.failures {
            eprintln!("error: {}", f.error);
        }
        let message = format!("{} of {} inputs failed; no panel written", loaded.failures.len(), paths.len());
        out.manifest.failures = loaded.failures;
        return Err(CliError { class, message });
    }

    let mut returns = Vec::with_capacity(loaded.series.len());
    for s in loaded.series {
        let Some(dates) = s.dates else {
            return Err(CliError::validation(format!("{}: aggregation needs dated input", s.path.display())));
        };
        returns.push(ReturnSeries { series_id: s.series_id, dates, returns: s.values });
    }
    let alignment = align_panel(returns, &AlignOptions { window: Default::default(), policy: args.coverage.into() })?;
    if !alignment.rejected.is_empty() {
        let names: Vec<String> =
            alignment.rejected.iter().map(|r| format!("{} (missing {} days)", r.series_id, r.missing_days)).collect();
        return Err(CliError::validation(format!(
            "calendar inconsistency: {} series do not cover the shared calendar: {}",
            names.len(),
            names.join(", ")
        )));
    }
    let panel = alignment.panel;
    let (forests, counts) = segment_panel(&panel, config, rule)?;
    let mut rows = Vec::new();
    for (s, f) in panel.series.iter().zip(&forests) {
        rows.extend(segment_rows(&s.series_id, f, Some(&panel.calendar))?);
    }
    write_outputs(args, out, &counts, &rows)?;
    let mut calendar = String::from("date\n");
    for d in &panel.calendar {
        calendar.push_str(&format!("{d}\n"));
    }
    out.write("calendar.csv", calendar.as_bytes())?;
    eprintln!("{} series over {} days", panel.series.len(), panel.calendar.len());

    if let Some(cut) = args.compare_window {
        compare(args, config, rule, out, &panel, &counts, cut)?;
    }
    Ok(())
}

fn compare(
    args: &AggregateArgs,
    config: &SegmentationConfig,
    rule: QuintileRule,
    out: &mut OutDir,
    panel: &Panel,
    full: &QuintilePanel,
    cut: NaiveDate,
) -> Result<()> {
    let truncated = panel.truncated(cut);
    let kept = truncated.calendar.len();
    if kept == 0 || kept == panel.calendar.len() {
        return Err(CliError::usage(format!(
            "--compare-window {cut} must fall inside the calendar {}..{}",
            panel.calendar.first().map_or(String::new(), |d| d.to_string()),
            panel.calendar.last().map_or(String::new(), |d| d.to_string()),
        )));
    }
    let (_, short) = segment_panel(&truncated, config, rule)?;
    let report = compare_windows(full, &short)?;
    let headline_end = kept.checked_sub(args.margin).filter(|&n| n > 0);
    let headline = headline_end.map(|n| report.summary_before(panel.calendar[n]));
    write_panel(out, "quintiles_truncated", &short, args.output.format)?;
    out.write_json(
        "agreement.json",
        &json!({
            "truncated_at": truncated.calendar[kept - 1],
            "margin_days": args.margin,
            "headline_before": headline_end.map(|n| panel.calendar[n]),
            "headline": headline,
            "summary": report.summary,
            "per_day": report.per_day,
        }),
    )?;
    match headline {
        Some(h) => eprintln!(
            "identical daily counts on {:.1}% of {} days before the margin",
            100.0 * h.equal_fraction,
            h.shared_days
        ),
        None => eprintln!("truncated calendar shorter than the margin; only the full summary is reported"),
    }
    Ok(())
}

fn read_calendar(path: &Path) -> Result<Vec<NaiveDate>> {
    let bytes = read_file(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| CliError::validation(e.to_string()).in_file(path))?;
    let col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("date"))
        .ok_or_else(|| CliError::validation("missing column \"date\" in header").in_file(path))?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::validation(e.to_string()).in_file(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(col).unwrap_or("").trim();
        let date: NaiveDate = field
            .parse()
            .map_err(|_| CliError::validation(format!("line {line}: bad date {field:?}")).in_file(path))?;
        if dates.last().is_some_and(|&d| d >= date) {
            return Err(CliError::validation(format!("line {line}: calendar dates must increase")).in_file(path));
        }
        dates.push(date);
    }
    Ok(dates)
}

fn forest_from_rows(rows: &[SegmentRow], config: &SegmentationConfig) -> SegmentForest {
    let segments = rows
        .iter()
        .map(|r| Segment {
            start: r.start,
            end: r.end,
            params: GaussianParams { mean: r.mean, variance: r.std * r.std },
            max_delta: r.max_delta,
            depth: r.depth,
        })
        .collect();
    SegmentForest {
        segments,
        splits: Vec::new(),
        series_len: rows.iter().map(|r| r.end).max().unwrap_or(0),
        config: *config,
    }
}

fn from_tables(args: &AggregateArgs, config: &SegmentationConfig, rule: QuintileRule, out: &mut OutDir) -> Result<()> {
    let calendar_path = args.calendar.as_deref().ok_or_else(|| CliError::usage("--segments needs --calendar"))?;
    out.manifest.inputs.push(InputDigest::of(calendar_path, &read_file(calendar_path)?));
    let calendar = read_calendar(calendar_path)?;

    let mut by_series: BTreeMap<String, Vec<SegmentRow>> = BTreeMap::new();
    for path in &args.segments {
        let bytes = read_file(path)?;
        out.manifest.inputs.push(InputDigest::of(path, &bytes));
        let rows = read_segment_csv(bytes.as_slice()).map_err(|e| CliError::from(e).in_file(path))?;
        for row in rows {
            by_series.entry(row.series_id.clone()).or_default().push(row);
        }
    }
    for rows in by_series.values_mut() {
        rows.sort_by_key(|r| r.start);
    }
    let ids: Vec<&str> = by_series.keys().map(String::as_str).collect();
    let forests: Vec<SegmentForest> = by_series.values().map(|rows| forest_from_rows(rows, config)).collect();
    let labeled = label_all(&ids, &forests, rule);
    let counts = daily_counts(&labeled, &calendar)?;
    let n_series = ids.len();
    let rows: Vec<SegmentRow> = by_series.into_values().flatten().collect();
    write_outputs(args, out, &counts, &rows)?;
    eprintln!("{n_series} series over {} days", calendar.len());
    Ok(())
}
