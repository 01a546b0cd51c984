use serde_json::json;
use volregime::segmentation::{segment_many, segment_rows, write_segment_csv};

use crate::args::{Format, SegmentArgs};
use crate::error::{CliError, Result};
use crate::inputs::{collect_paths, load_all};
use crate::manifest::{failure_class, OutDir, RunManifest};

pub fn run(args: &SegmentArgs) -> Result<()> {
    let config = args.segmentation.config()?;
    let mut digests = Vec::new();
    let paths = collect_paths(&args.input, &mut digests)?;
    let echo = json!({
        "segmentation": config,
        "input_kind": args.input_kind,
        "window": args.input.window,
        "columns": args.input.columns.format(),
        "fail_fast": args.input.fail_fast,
        "format": args.output.format,
    });
    let mut out = OutDir::create(&args.output.out, RunManifest::new("segment", echo))?;
    let loaded = match load_all(&paths, args.input_kind, &args.input) {
        Ok(l) => l,
        Err(e) => {
            out.finish()?;
            return Err(e);
        }
    };
    digests.extend(loaded.digests);
    out.manifest.inputs = digests;

    let values: Vec<&[f64]> = loaded.series.iter().map(|s| s.values.as_slice()).collect();
    let forests = segment_many(&values, &config);
    for (series, forest) in loaded.series.iter().zip(&forests) {
        let rows = segment_rows(&series.series_id, forest, series.dates.as_deref())?;
        let name = format!("segments/{}.{}", series.series_id, args.output.format.ext());
        match args.output.format {
            Format::Csv => {
                let mut bytes = Vec::new();
                write_segment_csv(&mut bytes, &rows)?;
                out.write(&name, &bytes)?;
            }
            Format::Json => out.write_json(&name, &json!({ "series_id": series.series_id, "segments": rows, "forest": forest }))?,
        }
    }
    eprintln!("segmented {} of {} series", forests.len(), paths.len());

    for f in &loaded.failures {
        eprintln!("error: {}", f.error);
    }
    let class = failure_class(&loaded.failures);
    let failed = loaded.failures.len();
    out.manifest.failures = loaded.failures;
    out.finish()?;
    match class {
        Some(class) => Err(CliError { class, message: format!("{failed} of {} inputs failed", paths.len()) }),
        None => Ok(()),
    }
}
