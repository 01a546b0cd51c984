use chrono::NaiveDate;
use volregime::aggregate::{compare_windows, daily_counts, quintile_label, QuintileRule};
use volregime::ingest::{align_panel, parse_price_csv, to_returns, write_price_csv, AlignOptions, PriceFormat, PriceRecord};
use volregime::segmentation::segment_many;
use volregime::synthetic::{burst_panel, business_days, generate, planted_break_panel};
use volregime::SegmentationConfig;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 4).unwrap()
}

#[test]
fn common_burst_shows_in_start_counts_and_fifth_quintile() {
    let calendar = business_days(start(), 600);
    let series: Vec<Vec<f64>> = burst_panel(50, 600, 300, 100, 9).iter().map(generate).collect();
    let forests = segment_many(&series, &SegmentationConfig::default());
    let labeled: Vec<_> = forests
        .iter()
        .enumerate()
        .map(|(i, f)| quintile_label(&format!("s{i}"), f, QuintileRule::Midpoint))
        .collect();
    let panel = daily_counts(&labeled, &calendar).unwrap();

    let near: u32 = panel.start_counts[290..=310].iter().sum();
    let near_end: u32 = panel.start_counts[390..=410].iter().sum();
    let elsewhere = panel.start_counts[1..290]
        .iter()
        .chain(&panel.start_counts[311..390])
        .chain(&panel.start_counts[411..])
        .max()
        .copied()
        .unwrap();
    assert!(near >= 45, "only {near} segment starts near the burst");
    assert!(near_end >= 40, "only {near_end} segment starts at the end of the burst");
    assert!(elsewhere <= 3, "start count {elsewhere} away from the burst edges");

    let q5_before = panel.counts[100][4];
    let q5_during = panel.counts[350][4];
    let q5_after = panel.counts[500][4];
    assert!(q5_during >= 40, "q5 during burst {q5_during}");
    assert!(q5_before <= 5 && q5_after <= 5, "q5 before {q5_before}, after {q5_after}");
    assert!(panel.totals().iter().all(|&t| t == 50));
}

#[test]
fn prices_to_quintile_panel() {
    let calendar = business_days(start(), 400);
    let specs = planted_break_panel(6, 400, 200, 21);
    let mut returns = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let records: Vec<PriceRecord> = calendar
            .iter()
            .zip(generate(spec))
            .map(|(&date, r)| PriceRecord { date, open: 100.0, close: 100.0 * r.exp() })
            .collect();
        let mut csv = Vec::new();
        write_price_csv(&mut csv, &records).unwrap();
        let parsed = parse_price_csv(&csv, &PriceFormat::default()).unwrap();
        returns.push(to_returns(&parsed, &format!("{}", 1000 + i)));
    }
    let alignment = align_panel(returns, &AlignOptions::default()).unwrap();
    assert!(alignment.rejected.is_empty());
    let panel = alignment.panel;
    let series: Vec<&[f64]> = panel.series.iter().map(|s| s.returns.as_slice()).collect();
    let forests = segment_many(&series, &SegmentationConfig::default());
    for f in &forests {
        assert!(f.boundaries().iter().any(|b| b.abs_diff(200) <= 15), "{:?}", f.boundaries());
    }
    let labeled: Vec<_> = forests
        .iter()
        .zip(&panel.series)
        .map(|(f, s)| quintile_label(&s.series_id, f, QuintileRule::Midpoint))
        .collect();
    let quintiles = daily_counts(&labeled, &panel.calendar).unwrap();
    assert_eq!(quintiles.n_series, 6);
    let report = compare_windows(&quintiles, &quintiles).unwrap();
    assert_eq!(report.summary.equal_fraction, 1.0);
}
