//! Independent reference computations checked against the library.

use libm::erf;
use proptest::prelude::*;
use volregime::aggregate::{daily_counts, quintile_label, QuintileRule};
use volregime::synthetic::{business_days, generate, Piece, PiecewiseSpec};
use volregime::*;

/// Two-pass MLE mean and variance.
fn fit(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Σ ln g(x; μ, σ²) at the MLE.
fn log_likelihood(xs: &[f64]) -> f64 {
    let (mean, var) = fit(xs);
    xs.iter()
        .map(|x| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var))
        .sum()
}

fn direct_delta(xs: &[f64], t: usize) -> f64 {
    log_likelihood(&xs[..t]) + log_likelihood(&xs[t..]) - log_likelihood(xs)
}

/// χ²(k) CDF without the incomplete-gamma machinery: a Poisson tail sum for
/// even k, erf plus the downward recurrence P(a+1,x) = P(a,x) − xᵃe⁻ˣ/Γ(a+1)
/// for odd k.
fn chi2_cdf_closed(x: f64, k: u32) -> f64 {
    let h = x / 2.0;
    if k % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k / 2 {
            term *= h / f64::from(j);
            sum += term;
        }
        1.0 - (-h).exp() * sum
    } else {
        let mut p = erf(h.sqrt());
        let mut a = 0.5;
        // xᵃ e⁻ˣ / Γ(a+1), starting from a = ½ where Γ(3/2) = √π/2.
        let mut term = h.sqrt() * (-h).exp() / (std::f64::consts::PI.sqrt() / 2.0);
        for _ in 0..(k - 1) / 2 {
            p -= term;
            a += 1.0;
            term *= h / a;
        }
        p
    }
}

fn random_piecewise() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec((20usize..150, -2.0f64..2.0, 0.1f64..5.0), 1..5),
        any::<u64>(),
    )
        .prop_map(|(pieces, seed)| {
            let pieces = pieces.into_iter().map(|(len, mean, std)| Piece { len, mean, std }).collect();
            generate(&PiecewiseSpec::new(pieces, seed).unwrap())
        })
}

#[test]
fn chi2_matches_closed_forms() {
    for k in 1..=12u32 {
        for i in 0..=400 {
            let x = i as f64 * 0.125;
            let got = chi2_cdf(x, k).unwrap();
            let want = chi2_cdf_closed(x, k);
            assert!((got - want).abs() < 1e-12, "k={k} x={x}: {got} vs {want}");
        }
    }
}

#[test]
fn chi2_quantiles_against_reference_values() {
    // Standard table values.
    let cases = [
        (0.95, 1, 3.841_458_820_694_124),
        (0.99, 1, 6.634_896_601_021_214),
        (0.95, 2, 5.991_464_547_107_979),
        (0.95, 4, 9.487_729_036_781_154),
        (0.999, 8, 26.124_481_558_376_15),
        (0.05, 8, 2.732_636_793_499_662),
    ];
    for (alpha, k, x) in cases {
        let got = chi2_inv_cdf(alpha, k).unwrap();
        assert!((got - x).abs() < 1e-8, "k={k} alpha={alpha}: {got} vs {x}");
    }
}

#[test]
fn chi2_cdf_is_monotone() {
    for k in [1, 2, 3, 5, 8, 30] {
        let mut prev = 0.0;
        for i in 0..2000 {
            let p = chi2_cdf(i as f64 * 0.05, k).unwrap();
            assert!(p >= prev && p <= 1.0);
            prev = p;
        }
    }
}

#[test]
fn chi2_inverse_monotone_in_alpha() {
    for k in [1, 2, 4, 8] {
        let mut prev = 0.0;
        for i in 1..1000 {
            let x = chi2_inv_cdf(i as f64 / 1000.0, k).unwrap();
            assert!(x > prev);
            prev = x;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn profile_matches_direct_likelihood_and_entropies(xs in random_piecewise(), min_len in 2usize..20) {
        let profile = delta_profile(&xs, min_len);
        for (t, value) in profile.iter().enumerate() {
            let Some(d) = value else { continue };
            let direct = direct_delta(&xs, t);
            let entropy = entropy_form_delta(&xs, t).unwrap();
            let tol = 1e-9 * (1.0 + direct.abs());
            prop_assert!((d - direct).abs() < tol, "t={} {} vs {}", t, d, direct);
            prop_assert!((entropy - direct).abs() < tol);
        }
    }

    #[test]
    fn profile_shift_invariant(xs in random_piecewise(), shift in -50.0f64..50.0) {
        let a = delta_profile(&xs, 10);
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let b = delta_profile(&shifted, 10);
        for (p, q) in a.iter().zip(&b) {
            match (p, q) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-8 * (1.0 + p.abs())),
                (None, None) => {}
                _ => prop_assert!(false, "evaluation mask changed"),
            }
        }
    }

    #[test]
    fn mle_fit_agrees_with_two_pass(xs in prop::collection::vec(-1e2f64..1e2, 1..300)) {
        let p = mle_fit(&xs, 0, xs.len()).unwrap();
        let (mean, var) = fit(&xs);
        prop_assert!((p.mean - mean).abs() < 1e-12 * (1.0 + mean.abs()) * 100.0);
        prop_assert!((p.variance - var).abs() < 1e-12 * var.max(1.0));
    }

    #[test]
    fn scaled_series_keeps_labels(xs in random_piecewise(), c in 0.01f64..100.0) {
        let config = SegmentationConfig::default();
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let a = recursive_segment(&xs, &config);
        let b = recursive_segment(&scaled, &config);
        prop_assert_eq!(a.boundaries(), b.boundaries());
        let la: Vec<_> = quintile_label("s", &a, QuintileRule::Midpoint).iter().map(|l| (l.rank, l.quintile)).collect();
        let lb: Vec<_> = quintile_label("s", &b, QuintileRule::Midpoint).iter().map(|l| (l.rank, l.quintile)).collect();
        prop_assert_eq!(la, lb);
    }

    #[test]
    fn daily_counts_permutation_invariant(seeds in prop::collection::vec(any::<u64>(), 1..8), rot in 0usize..8) {
        let len = 300;
        let calendar = business_days(chrono::NaiveDate::from_ymd_opt(2004, 6, 1).unwrap(), len);
        let config = SegmentationConfig::default();
        let labeled: Vec<_> = seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| {
                let spec = PiecewiseSpec::new(
                    vec![
                        Piece { len: 100 + 10 * i, mean: 0.0, std: 1.0 },
                        Piece { len: len - 100 - 10 * i, mean: 0.0, std: 2.5 },
                    ],
                    seed,
                )
                .unwrap();
                let forest = recursive_segment(&generate(&spec), &config);
                quintile_label(&format!("s{i}"), &forest, QuintileRule::Midpoint)
            })
            .collect();
        let panel = daily_counts(&labeled, &calendar).unwrap();
        prop_assert!(panel.totals().iter().all(|&t| t as usize == seeds.len()));
        let mut rotated = labeled.clone();
        let r = rot % rotated.len();
        rotated.rotate_left(r);
        prop_assert_eq!(daily_counts(&rotated, &calendar).unwrap(), panel);
    }
}
