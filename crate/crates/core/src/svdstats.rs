//! Local SVD truncation levels: how many singular modes a window needs to
//! retain a given fraction of its energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::Field2D;
use crate::stats::{map_windows, window_counts, LocalStats};

pub const DEFAULT_THRESHOLD: f64 = 0.99;

const JACOBI_MAX_SWEEPS: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum SvdError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Whether a window is mean-centered before the decomposition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    #[default]
    Mean,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationLevel {
    pub k: usize,
    pub energy_fraction_at_k: f64,
}

/// Singular values of a row-major `rows x cols` matrix, in descending order.
///
/// One-sided Jacobi: column pairs are rotated until mutually orthogonal,
/// after which the column norms are the singular values.
pub fn singular_values(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols);
    // work on the orientation with fewer columns; store columns contiguously
    let (m, n, cols_major): (usize, usize, Vec<f64>) = if cols <= rows {
        let mut a = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                a[c * rows + r] = data[r * cols + c];
            }
        }
        (rows, cols, a)
    } else {
        (cols, rows, data.to_vec())
    };
    let mut a = cols_major;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (head, tail) = a.split_at_mut(q * m);
                let cp = &mut head[p * m..(p + 1) * m];
                let cq = &mut tail[..m];
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in cp.iter().zip(cq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = a.chunks_exact(m).map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Smallest `k` whose leading `k` squared singular values reach `threshold`
/// of the total. A window with no energy (constant after centering) has
/// `k = 1`.
pub fn truncation_level_from_singular_values(sv: &[f64], threshold: f64) -> TruncationLevel {
    let energy: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return TruncationLevel { k: 1, energy_fraction_at_k: 1.0 };
    }
    let mut cum = 0.0;
    for (i, e) in energy.iter().enumerate() {
        cum += e;
        let frac = cum / total;
        if frac >= threshold {
            return TruncationLevel { k: i + 1, energy_fraction_at_k: frac.min(1.0) };
        }
    }
    // rounding left the full sum a hair below threshold == 1.0
    TruncationLevel { k: sv.len(), energy_fraction_at_k: 1.0 }
}

pub fn svd_truncation_level_with(
    window: &Field2D,
    threshold: f64,
    centering: Centering,
) -> Result<TruncationLevel, SvdError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SvdError::Parameter(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let values = window.values();
    let first = values[0];
    if values.iter().all(|&v| v == first) && (centering == Centering::Mean || first == 0.0) {
        return Ok(TruncationLevel { k: 1, energy_fraction_at_k: 1.0 });
    }
    let data: Vec<f64> = match centering {
        Centering::Mean => {
            let mean = window.mean();
            values.iter().map(|v| v - mean).collect()
        }
        Centering::None => values.to_vec(),
    };
    let sv = singular_values(&data, window.ny(), window.nx());
    Ok(truncation_level_from_singular_values(&sv, threshold))
}

/// Truncation level of the mean-centered window.
pub fn svd_truncation_level(window: &Field2D, threshold: f64) -> Result<TruncationLevel, SvdError> {
    svd_truncation_level_with(window, threshold, Centering::Mean)
}

pub fn local_svd_stats_with(
    field: &Field2D,
    h: usize,
    threshold: f64,
    centering: Centering,
) -> Result<LocalStats, SvdError> {
    if h < 8 {
        return Err(SvdError::Parameter(format!("window size must be >= 8, got {h}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SvdError::Parameter(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let (wx, wy) = window_counts(field, h);
    if wx < 2 || wy < 2 {
        return Err(SvdError::Input(format!(
            "{}x{} field holds {wx}x{wy} complete {h}x{h} windows, need at least 2x2",
            field.nx(),
            field.ny()
        )));
    }
    let values = map_windows(field, h, |w| svd_truncation_level_with(w, threshold, centering).map(|t| t.k as f64))?;
    Ok(LocalStats::new("svd_truncation_std", h, Some(threshold), wx, wy, values))
}

/// Truncation levels over non-overlapping `h x h` windows.
pub fn local_svd_stats(field: &Field2D, h: usize, threshold: f64) -> Result<LocalStats, SvdError> {
    local_svd_stats_with(field, h, threshold, Centering::Mean)
}
