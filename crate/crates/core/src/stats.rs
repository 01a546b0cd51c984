//! Scalar statistics kernel: Gaussian MLE fits, differential entropy and the
//! chi-squared distribution (CDF and inverse) built on the regularized lower
//! incomplete gamma function.

// Negated comparisons below are there so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Iteration cap for the incomplete gamma series and continued fraction.
const MAX_ITER: usize = 500;

/// Errors raised by the statistics kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty range [{from}, {to}) over a series of length {len}")]
    EmptyRange { from: usize, to: usize, len: usize },
    #[error("range [{from}, {to}) out of bounds for a series of length {len}")]
    OutOfBounds { from: usize, to: usize, len: usize },
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("chi-squared argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("degrees of freedom must be at least 1")]
    ZeroDegreesOfFreedom,
    #[error("incomplete gamma evaluation did not converge for a={a}, x={x}")]
    NoConvergence { a: f64, x: f64 },
}

/// Mean and variance of a fitted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianParams {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Maximum-likelihood Gaussian fit over `xs[from..to]`.
///
/// The variance uses divisor `n` (the biased MLE form), computed as
/// `E[x²] − E[x]²` on values shifted by `xs[from]` so that a constant range
/// yields exactly zero.
pub fn mle_fit(xs: &[f64], from: usize, to: usize) -> Result<GaussianParams, StatsError> {
    if to > xs.len() {
        return Err(StatsError::OutOfBounds { from, to, len: xs.len() });
    }
    if to <= from {
        return Err(StatsError::EmptyRange { from, to, len: xs.len() });
    }
    let window = &xs[from..to];
    let shift = window[0];
    let n = window.len() as f64;
    let (s1, s2) = window.iter().fold((0.0, 0.0), |(s1, s2), &x| {
        let d = x - shift;
        (s1 + d, s2 + d * d)
    });
    let m1 = s1 / n;
    let variance = (s2 / n - m1 * m1).max(0.0);
    Ok(GaussianParams { mean: shift + m1, variance })
}

/// Differential entropy of a Gaussian with the given variance, in nats:
/// `½·ln(2πe·variance)`.
pub fn gaussian_entropy(variance: f64) -> Result<f64, StatsError> {
    if !(variance > 0.0) {
        return Err(StatsError::NonPositiveVariance(variance));
    }
    Ok(0.5 * (2.0 * PI * E * variance).ln())
}

/// Chi-squared distribution with `k` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChiSquared {
    k: u32,
}

impl ChiSquared {
    pub fn new(k: u32) -> Result<Self, StatsError> {
        if k == 0 {
            return Err(StatsError::ZeroDegreesOfFreedom);
        }
        Ok(Self { k })
    }

    pub fn dof(&self) -> u32 {
        self.k
    }

    fn shape(&self) -> f64 {
        f64::from(self.k) / 2.0
    }

    /// Lower-tail probability `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> Result<f64, StatsError> {
        if !(x >= 0.0) {
            return Err(StatsError::NegativeArgument(x));
        }
        Ok(regularized_gamma(self.shape(), x / 2.0)?.0)
    }

    /// Upper-tail probability `P(X > x)`, computed without cancellation.
    pub fn sf(&self, x: f64) -> Result<f64, StatsError> {
        if !(x >= 0.0) {
            return Err(StatsError::NegativeArgument(x));
        }
        Ok(regularized_gamma(self.shape(), x / 2.0)?.1)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let a = self.shape();
        if x == 0.0 {
            return match self.k {
                1 => f64::INFINITY,
                2 => 0.5,
                _ => 0.0,
            };
        }
        ((a - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(a)).exp() / 2.0
    }

    /// Quantile function: the `x` with `cdf(x) = alpha`.
    ///
    /// Brackets the root by doubling, then refines with Newton steps that
    /// fall back to bisection whenever they leave the bracket. Above the
    /// median the root is located on the upper tail so probabilities close
    /// to one keep their precision.
    pub fn inv_cdf(&self, alpha: f64) -> Result<f64, StatsError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(StatsError::ProbabilityOutOfRange(alpha));
        }
        let upper = alpha > 0.5;
        let target = if upper { 1.0 - alpha } else { alpha };
        // g(x) is increasing in x in both branches.
        let g = |x: f64| -> Result<f64, StatsError> {
            if upper {
                Ok(target - self.sf(x)?)
            } else {
                Ok(self.cdf(x)? - target)
            }
        };

        let mut lo = 0.0;
        let mut hi = f64::from(self.k).max(1.0);
        while g(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
        }

        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gx = g(x)?;
            if gx == 0.0 {
                return Ok(x);
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = self.pdf(x);
            let newton = x - gx / slope;
            let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

/// `P(X ≤ x)` for `X ~ χ²(k)`.
pub fn chi2_cdf(x: f64, k: u32) -> Result<f64, StatsError> {
    ChiSquared::new(k)?.cdf(x)
}

/// Inverse of [`chi2_cdf`] in its first argument.
pub fn chi2_inv_cdf(alpha: f64, k: u32) -> Result<f64, StatsError> {
    ChiSquared::new(k)?.inv_cdf(alpha)
}

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
///
/// Series expansion of `P` for `x < a + 1`, Lentz continued fraction for `Q`
/// otherwise; the complement is taken from whichever side was computed.
pub fn regularized_gamma(a: f64, x: f64) -> Result<(f64, f64), StatsError> {
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let prefactor = (a * x.ln() - x - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let p = (prefactor * lower_series(a, x)?).min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let q = (prefactor * upper_fraction(a, x)?).min(1.0);
        Ok((1.0 - q, q))
    }
}

// Σ xⁿ / (a(a+1)…(a+n))
fn lower_series(a: f64, x: f64) -> Result<f64, StatsError> {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum);
        }
    }
    Err(StatsError::NoConvergence { a, x })
}

// Modified Lentz evaluation of 1/(x+1−a− 1(1−a)/(x+3−a− 2(2−a)/(x+5−a− …)))
fn upper_fraction(a: f64, x: f64) -> Result<f64, StatsError> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence { a, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn mle_fit_examples() {
        let p = mle_fit(&[1.0, 1.0, 1.0, 1.0], 0, 4).unwrap();
        assert_eq!(p, GaussianParams { mean: 1.0, variance: 0.0 });
        let p = mle_fit(&[-1.0, 1.0, -1.0, 1.0], 0, 4).unwrap();
        assert_eq!(p, GaussianParams { mean: 0.0, variance: 1.0 });
        let p = mle_fit(&[1.0, 2.0, 3.0, 4.0, 5.0], 0, 5).unwrap();
        assert_eq!(p, GaussianParams { mean: 3.0, variance: 2.0 });
        let p = mle_fit(&[9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 9.0], 1, 6).unwrap();
        assert_eq!(p, GaussianParams { mean: 3.0, variance: 2.0 });
    }

    #[test]
    fn mle_fit_rejects_empty_and_out_of_bounds() {
        assert!(matches!(mle_fit(&[1.0, 2.0], 1, 1), Err(StatsError::EmptyRange { .. })));
        assert!(matches!(mle_fit(&[1.0, 2.0], 0, 3), Err(StatsError::OutOfBounds { .. })));
        assert!(matches!(mle_fit(&[], 0, 0), Err(StatsError::EmptyRange { .. })));
    }

    #[test]
    fn entropy_examples() {
        let h1 = gaussian_entropy(1.0).unwrap();
        assert!((h1 - 1.418_938_533_204_672_7).abs() < 1e-12);
        let h2 = gaussian_entropy(E * E).unwrap();
        assert!((h2 - h1 - 1.0).abs() < 1e-12);
        assert!(gaussian_entropy(1.0 / (2.0 * PI * E)).unwrap().abs() < 1e-15);
        assert!(gaussian_entropy(0.0).is_err());
        assert!(gaussian_entropy(-1.0).is_err());
        assert!(gaussian_entropy(f64::NAN).is_err());
    }

    #[test]
    fn chi2_cdf_examples() {
        for k in 1..10 {
            assert_eq!(chi2_cdf(0.0, k).unwrap(), 0.0);
        }
        assert!((chi2_cdf(2.0 * 2f64.ln(), 2).unwrap() - 0.5).abs() < 1e-14);
        let p = chi2_cdf(20.0, 2).unwrap();
        assert!((p - (1.0 - (-10f64).exp())).abs() < 1e-14);
        assert!((p - 0.999_954_6).abs() < 1e-7);
        assert!(chi2_cdf(-1e-9, 2).is_err());
        assert!(chi2_cdf(1.0, 0).is_err());
    }

    #[test]
    fn chi2_inv_cdf_examples() {
        let x = chi2_inv_cdf(1.0 - (-10f64).exp(), 2).unwrap();
        assert!((x - 20.0).abs() < 1e-9, "{x}");
        let x = chi2_inv_cdf(0.5, 2).unwrap();
        assert!((x - 2.0 * 2f64.ln()).abs() < 1e-12);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(chi2_inv_cdf(bad, 2).is_err());
        }
    }

    #[test]
    fn upper_tail_is_accurate_far_out() {
        // Q(1, 50) = e^{-50} exactly for k = 2.
        let q = ChiSquared::new(2).unwrap().sf(100.0).unwrap();
        assert!((q / (-50f64).exp() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mle_variance_matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let p = mle_fit(&xs, 0, xs.len()).unwrap();
            let brute = brute_variance(&xs);
            prop_assert!((p.variance - brute).abs() <= 1e-12 * brute.max(1.0),
                "{} vs {}", p.variance, brute);
        }

        #[test]
        fn entropy_log_scaling(v in 1e-8f64..1e8) {
            let d = gaussian_entropy(v).unwrap() - gaussian_entropy(1.0).unwrap();
            prop_assert!((d - 0.5 * v.ln()).abs() < 1e-12);
        }

        #[test]
        fn inverse_composes(a in 1e-6f64..(1.0 - 1e-6), k in prop::sample::select(vec![1u32, 2, 4, 8])) {
            let x = chi2_inv_cdf(a, k).unwrap();
            prop_assert!((chi2_cdf(x, k).unwrap() - a).abs() < 1e-10);
        }
    }
}
