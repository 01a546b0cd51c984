//! Piecewise-stationary Gaussian test series and boundary-recovery scoring.
//!
//! Normals come from the basic Box-Muller transform fed by PCG64
//! (`Lcg128Xsl64`, seeded through `SeedableRng::seed_from_u64`), so output is
//! identical on every platform for a given seed.

use std::f64::consts::PI;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::SegmentForest;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("a piecewise spec needs at least one piece")]
    NoPieces,
    #[error("piece {index}: length must be positive")]
    EmptyPiece { index: usize },
    #[error("piece {index}: std must be finite and non-negative, got {std}")]
    BadStd { index: usize, std: f64 },
    #[error("piece {index}: mean must be finite, got {mean}")]
    BadMean { index: usize, mean: f64 },
    #[error("cannot parse piece {0:?}; expected LEN:MEAN:STD")]
    Parse(String),
}

/// Standard normal source: Box-Muller over a seeded PCG64 stream, caching
/// the second variate of each pair.
#[derive(Debug, Clone)]
pub struct BoxMuller {
    rng: Pcg64,
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn seeded(seed: u64) -> Self {
        BoxMuller { rng: Pcg64::seed_from_u64(seed), spare: None }
    }

    /// Independent child stream seeded from this one.
    pub fn split(&mut self) -> Self {
        BoxMuller::seeded(self.rng.next_u64())
    }

    // 53-bit uniform on [0, 1).
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub len: usize,
    pub mean: f64,
    pub std: f64,
}

impl FromStr for Piece {
    type Err = SpecError;

    /// Parses `LEN:MEAN:STD`, e.g. `500:0:2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [len, mean, std] = parts.as_slice() else {
            return Err(SpecError::Parse(s.to_string()));
        };
        let err = || SpecError::Parse(s.to_string());
        Ok(Piece {
            len: len.trim().parse().map_err(|_| err())?,
            mean: mean.trim().parse().map_err(|_| err())?,
            std: std.trim().parse().map_err(|_| err())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSpec {
    pieces: Vec<Piece>,
    seed: u64,
}

/// Ordered pieces plus the generator seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PiecewiseSpec {
    raw: RawSpec,
}

impl From<PiecewiseSpec> for RawSpec {
    fn from(s: PiecewiseSpec) -> Self {
        s.raw
    }
}

impl TryFrom<RawSpec> for PiecewiseSpec {
    type Error = SpecError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        if raw.pieces.is_empty() {
            return Err(SpecError::NoPieces);
        }
        for (index, p) in raw.pieces.iter().enumerate() {
            if p.len == 0 {
                return Err(SpecError::EmptyPiece { index });
            }
            if !(p.std >= 0.0 && p.std.is_finite()) {
                return Err(SpecError::BadStd { index, std: p.std });
            }
            if !p.mean.is_finite() {
                return Err(SpecError::BadMean { index, mean: p.mean });
            }
        }
        Ok(PiecewiseSpec { raw })
    }
}

impl PiecewiseSpec {
    pub fn new(pieces: Vec<Piece>, seed: u64) -> Result<Self, SpecError> {
        RawSpec { pieces, seed }.try_into()
    }

    /// Four zero-mean pieces of 500 with standard deviations 1, 2, 1, 3.
    pub fn four_regime(seed: u64) -> Self {
        let pieces = [1.0, 2.0, 1.0, 3.0]
            .into_iter()
            .map(|std| Piece { len: 500, mean: 0.0, std })
            .collect();
        PiecewiseSpec::new(pieces, seed).expect("valid")
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.raw.pieces
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PiecewiseSpec { raw: RawSpec { seed, ..self.raw.clone() } }
    }

    pub fn total_len(&self) -> usize {
        self.raw.pieces.iter().map(|p| p.len).sum()
    }

    /// Interior change points: cumulative piece lengths, excluding 0 and the
    /// total.
    pub fn boundaries(&self) -> Vec<usize> {
        let pieces = &self.raw.pieces;
        pieces[..pieces.len() - 1]
            .iter()
            .scan(0, |acc, p| {
                *acc += p.len;
                Some(*acc)
            })
            .collect()
    }
}

/// Concatenated draws `mean_j + std_j·Z` for each piece in order.
pub fn generate(spec: &PiecewiseSpec) -> Vec<f64> {
    let mut normals = BoxMuller::seeded(spec.seed());
    let mut out = Vec::with_capacity(spec.total_len());
    for piece in spec.pieces() {
        out.extend((0..piece.len).map(|_| piece.mean + piece.std * normals.next_standard()));
    }
    out
}

/// Boundary match statistics of a segmentation against a known truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub true_boundaries: Vec<usize>,
    pub found_boundaries: Vec<usize>,
    /// `(true, found)` pairs, sorted by the true boundary.
    pub matched: Vec<(usize, usize)>,
    pub missed: usize,
    pub spurious: usize,
    /// Relative std error `|found − true| / true` per true piece, present
    /// when both its ends were matched to consecutive found boundaries.
    /// Absolute error is reported for pieces with zero true std.
    pub per_segment_param_error: Vec<Option<f64>>,
}

impl RecoveryScore {
    pub fn is_exact_count(&self) -> bool {
        self.found_boundaries.len() == self.true_boundaries.len()
    }

    pub fn max_boundary_error(&self) -> Option<usize> {
        self.matched.iter().map(|&(t, f)| t.abs_diff(f)).max()
    }

    pub fn max_param_error(&self) -> Option<f64> {
        self.per_segment_param_error.iter().flatten().copied().reduce(f64::max)
    }
}

pub fn score_recovery(truth: &PiecewiseSpec, forest: &SegmentForest, tol: usize) -> RecoveryScore {
    let stds: Vec<f64> = forest.segments.iter().map(|s| s.std()).collect();
    score_boundaries(truth, &forest.boundaries(), &stds, tol)
}

/// Scores found boundaries (interior change points, ascending) and the std
/// of each found segment (one more entry than boundaries) against `truth`.
///
/// Boundaries are paired greedily by distance: among all pairs within `tol`,
/// the closest is matched first, ties going to the earlier true then the
/// earlier found boundary.
pub fn score_boundaries(
    truth: &PiecewiseSpec,
    found: &[usize],
    found_stds: &[f64],
    tol: usize,
) -> RecoveryScore {
    let true_b = truth.boundaries();
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &t) in true_b.iter().enumerate() {
        for (j, &f) in found.iter().enumerate() {
            let d = t.abs_diff(f);
            if d <= tol {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_unstable();

    let mut true_to_found: Vec<Option<usize>> = vec![None; true_b.len()];
    let mut found_used = vec![false; found.len()];
    for (_, i, j) in candidates {
        if true_to_found[i].is_none() && !found_used[j] {
            true_to_found[i] = Some(j);
            found_used[j] = true;
        }
    }
    let matched: Vec<(usize, usize)> = true_to_found
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (true_b[i], found[j])))
        .collect();

    // Found segment k spans [found[k-1], found[k]); ends map to positions
    // -1 and found.len() in "boundary index" space.
    let n_found = found.len() as isize;
    let mapped = |piece_edge: usize| -> Option<isize> {
        if piece_edge == 0 {
            Some(-1)
        } else if piece_edge == true_b.len() + 1 {
            Some(n_found)
        } else {
            true_to_found[piece_edge - 1].map(|j| j as isize)
        }
    };
    let per_segment_param_error = truth
        .pieces()
        .iter()
        .enumerate()
        .map(|(k, piece)| {
            let (lo, hi) = (mapped(k)?, mapped(k + 1)?);
            if hi != lo + 1 {
                return None;
            }
            let got = *found_stds.get(hi as usize)?;
            let err = (got - piece.std).abs();
            Some(if piece.std > 0.0 { err / piece.std } else { err })
        })
        .collect();

    RecoveryScore {
        missed: true_b.len() - matched.len(),
        spurious: found.len() - matched.len(),
        true_boundaries: true_b,
        found_boundaries: found.to_vec(),
        matched,
        per_segment_param_error,
    }
}

/// `n` consecutive Monday–Friday dates starting at `start` (rolled forward
/// to the next weekday if needed).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// Panel of `n_series` specs sharing a common volatility break: each series
/// has its own base std `b` in `[0.01, 0.02)`, runs at `b` until `break_at`
/// and at `3b` afterwards. Series `i` is seeded with `seed + i`.
pub fn planted_break_panel(n_series: usize, len: usize, break_at: usize, seed: u64) -> Vec<PiecewiseSpec> {
    assert!(break_at > 0 && break_at < len, "break must fall inside the series");
    base_scales(n_series, seed)
        .enumerate()
        .map(|(i, base)| {
            PiecewiseSpec::new(
                vec![
                    Piece { len: break_at, mean: 0.0, std: base },
                    Piece { len: len - break_at, mean: 0.0, std: 3.0 * base },
                ],
                seed.wrapping_add(i as u64),
            )
            .expect("valid")
        })
        .collect()
}

/// Like [`planted_break_panel`] but the high regime lasts `burst_len` days
/// and is followed by a `1.5b` tail, so with three segments per series the
/// burst is the top quintile.
pub fn burst_panel(
    n_series: usize,
    len: usize,
    break_at: usize,
    burst_len: usize,
    seed: u64,
) -> Vec<PiecewiseSpec> {
    assert!(
        break_at > 0 && burst_len > 0 && break_at + burst_len < len,
        "burst must fall inside the series"
    );
    base_scales(n_series, seed)
        .enumerate()
        .map(|(i, base)| {
            PiecewiseSpec::new(
                vec![
                    Piece { len: break_at, mean: 0.0, std: base },
                    Piece { len: burst_len, mean: 0.0, std: 3.0 * base },
                    Piece { len: len - break_at - burst_len, mean: 0.0, std: 1.5 * base },
                ],
                seed.wrapping_add(i as u64),
            )
            .expect("valid")
        })
        .collect()
}

fn base_scales(n_series: usize, seed: u64) -> impl Iterator<Item = f64> {
    let mut scales = BoxMuller::seeded(seed ^ 0x5eed_ba5e);
    (0..n_series).map(move |_| 0.01 * (1.0 + scales.uniform()))
}
