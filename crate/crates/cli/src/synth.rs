use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use volregime::synthetic::{generate, score_recovery, PiecewiseSpec, RecoveryScore};
use volregime::{recursive_segment, SegmentationConfig};

use crate::args::{Format, SynthArgs};
use crate::error::Result;
use crate::manifest::{OutDir, RunManifest};

#[derive(Debug, Serialize)]
struct ScoredRun {
    seed: u64,
    recovered: bool,
    score: RecoveryScore,
}

#[derive(Debug, Serialize)]
struct ReplicateSummary {
    replicates: usize,
    first_seed: u64,
    tol: usize,
    param_tol: f64,
    exact_count: usize,
    recovered: usize,
    recovered_fraction: f64,
    max_boundary_error: Option<usize>,
    max_param_error: Option<f64>,
    failed_seeds: Vec<u64>,
}

/// A run is recovered when the change-point count is right, every true
/// boundary is matched within `tol`, and every piece's std is within
/// `param_tol` relative error.
fn recovered(score: &RecoveryScore, param_tol: f64) -> bool {
    score.is_exact_count()
        && score.missed == 0
        && score.per_segment_param_error.iter().all(|e| e.is_some_and(|e| e <= param_tol))
}

fn score_run(spec: &PiecewiseSpec, config: &SegmentationConfig, args: &SynthArgs) -> (Vec<f64>, ScoredRun, volregime::SegmentForest) {
    let xs = generate(spec);
    let forest = recursive_segment(&xs, config);
    let score = score_recovery(spec, &forest, args.tol);
    let run = ScoredRun { seed: spec.seed(), recovered: recovered(&score, args.param_tol), score };
    (xs, run, forest)
}

pub fn series_bytes(xs: &[f64], format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut out = String::with_capacity(xs.len() * 24 + 6);
            out.push_str("value\n");
            for x in xs {
                out.push_str(&format!("{x}\n"));
            }
            out.into_bytes()
        }
        Format::Json => {
            let mut bytes = serde_json::to_vec(&json!({ "values": xs })).expect("serializable");
            bytes.push(b'\n');
            bytes
        }
    }
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let spec = args.spec()?;
    let config = args.segmentation.config()?;
    let echo = json!({
        "spec": spec,
        "segmentation": config,
        "segment": args.segment,
        "replicates": args.replicates,
        "tol": args.tol,
        "param_tol": args.param_tol,
        "format": args.output.format,
    });
    let mut out = OutDir::create(&args.output.out, RunManifest::new("synth", echo))?;

    match args.replicates {
        None => {
            let ext = args.output.format.ext();
            if args.segment {
                let (xs, run, forest) = score_run(&spec, &config, args);
                out.write(&format!("series.{ext}"), &series_bytes(&xs, args.output.format))?;
                out.write_json("forest.json", &forest)?;
                out.write_json("score.json", &run)?;
            } else {
                out.write(&format!("series.{ext}"), &series_bytes(&generate(&spec), args.output.format))?;
            }
        }
        Some(n) => {
            let runs: Vec<ScoredRun> = (0..n as u64)
                .into_par_iter()
                .map(|i| score_run(&spec.with_seed(args.seed.wrapping_add(i)), &config, args).1)
                .collect();
            for (i, run) in runs.iter().enumerate() {
                out.write_json(&format!("replicates/score_{i:04}.json"), run)?;
            }
            let recovered = runs.iter().filter(|r| r.recovered).count();
            let summary = ReplicateSummary {
                replicates: n,
                first_seed: args.seed,
                tol: args.tol,
                param_tol: args.param_tol,
                exact_count: runs.iter().filter(|r| r.score.is_exact_count()).count(),
                recovered,
                recovered_fraction: if n == 0 { 0.0 } else { recovered as f64 / n as f64 },
                max_boundary_error: runs.iter().filter_map(|r| r.score.max_boundary_error()).max(),
                max_param_error: runs.iter().filter_map(|r| r.score.max_param_error()).reduce(f64::max),
                failed_seeds: runs.iter().filter(|r| !r.recovered).map(|r| r.seed).collect(),
            };
            out.write_json("summary.json", &summary)?;
            eprintln!("{recovered}/{n} replicates recovered");
        }
    }
    out.finish()
}
