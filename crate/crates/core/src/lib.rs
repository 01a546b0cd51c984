//! Segmentation of nonstationary return series into stationary Gaussian
//! regimes, and cross-sectional volatility-quintile panels built from the
//! resulting segments.
//!
//! - [`stats`]: Gaussian MLE, entropy, χ² CDF and quantile.
//! - [`segmentation`]: Δ(t) profile, best split, recursive segmentation.
//! - [`synthetic`]: piecewise Gaussian series and boundary recovery scoring.
//! - [`ingest`]: OHLC CSV parsing, open-to-close log returns, panel alignment.
//! - [`aggregate`]: quintile labels, daily counts, window comparison.

pub mod aggregate;
pub mod ingest;
pub mod segmentation;
pub mod stats;
pub mod synthetic;

pub use segmentation::{
    best_split, delta_profile, entropy_form_delta, recursive_segment, Segment, SegmentForest,
    SegmentationConfig, Threshold, ThresholdConvention,
};
pub use stats::{chi2_cdf, chi2_inv_cdf, gaussian_entropy, mle_fit, ChiSquared, GaussianParams};
