//! Empirical semi-variograms, squared-exponential range fits, and windowed
//! range statistics.
//!
//! The estimator is the classical one:
//! `gamma(h) = 1 / (2 N(h)) * sum_{pairs at distance h} (z_i - z_j)^2`, with
//! pairs binned by their Euclidean offset rounded to the nearest integer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::Field2D;
use crate::stats::{map_windows, window_counts, LocalStats};

/// Pair-operation budget used to pick an automatic anchor stride.
pub const AUTO_STRIDE_BUDGET: u64 = 100_000_000;

/// Window size of the local range statistic.
pub const DEFAULT_WINDOW: usize = 32;

const GRID_POINTS: usize = 128;
const GOLDEN_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum VariogramError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("variogram is identically zero (constant field)")]
    Degenerate,
    #[error("need at least 3 lag bins to fit a range, got {0}")]
    InsufficientData(usize),
}

/// One lag bin: `(lag, gamma, pair_count)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, u64)", into = "(f64, f64, u64)")]
pub struct LagBin {
    pub lag: f64,
    pub gamma: f64,
    pub pair_count: u64,
}

impl From<(f64, f64, u64)> for LagBin {
    fn from((lag, gamma, pair_count): (f64, f64, u64)) -> Self {
        Self { lag, gamma, pair_count }
    }
}

impl From<LagBin> for (f64, f64, u64) {
    fn from(b: LagBin) -> Self {
        (b.lag, b.gamma, b.pair_count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramEstimate {
    pub bins: Vec<LagBin>,
    pub max_lag: f64,
    pub subsample_stride: usize,
}

/// Denominator of the exponent in `c0 * (1 - exp(-h^2 / D))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    /// `D = a^2`: `a` is measured in grid units, like the generator's range.
    #[default]
    ASquared,
    /// `D = a`.
    ALinear,
}

impl std::str::FromStr for ModelForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a_squared" => Ok(ModelForm::ASquared),
            "a_linear" => Ok(ModelForm::ALinear),
            other => Err(format!("unknown model form {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedVariogram {
    #[serde(rename = "c0")]
    pub sill: f64,
    #[serde(rename = "a")]
    pub range: f64,
    pub model_form: ModelForm,
    pub weighted_rss: f64,
}

impl FittedVariogram {
    pub fn predict(&self, h: f64) -> f64 {
        self.sill * model_shape(h, self.range, self.model_form)
    }
}

/// Empirical estimate together with its fit, as written by `stats`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalVariogram {
    #[serde(flatten)]
    pub estimate: VariogramEstimate,
    pub fit: FittedVariogram,
}

fn model_shape(h: f64, range: f64, form: ModelForm) -> f64 {
    let d = match form {
        ModelForm::ASquared => range * range,
        ModelForm::ALinear => range,
    };
    1.0 - (-(h * h) / d).exp()
}

/// Half-plane offsets `(dx, dy)` with `dx >= 0` and `0 < dx^2 + dy^2 <= max_lag^2`.
/// Each unordered pair of grid points is reached through exactly one offset.
fn offsets(max_lag: f64) -> Vec<(usize, isize)> {
    let reach = max_lag.floor() as isize;
    let limit = max_lag * max_lag;
    let mut out = Vec::new();
    for dx in 0..=reach {
        for dy in -reach..=reach {
            if dx == 0 && dy <= 0 {
                continue;
            }
            if ((dx * dx + dy * dy) as f64) <= limit {
                out.push((dx as usize, dy));
            }
        }
    }
    out
}

/// Lags beyond the shorter side minus one have no pairs along that axis.
fn check_lag(field: &Field2D, max_lag: f64) -> Result<(), VariogramError> {
    let limit = (field.nx().min(field.ny()) - 1) as f64;
    if !(max_lag >= 1.0 && max_lag <= limit) {
        return Err(VariogramError::Parameter(format!("max_lag must lie in [1, {limit}], got {max_lag}")));
    }
    Ok(())
}

/// Smallest anchor stride keeping the estimated pair operations within
/// [`AUTO_STRIDE_BUDGET`].
pub fn auto_stride(nx: usize, ny: usize, max_lag: f64) -> usize {
    let n_off = offsets(max_lag).len() as u64;
    (1..)
        .find(|&s: &usize| {
            let anchors = nx.div_ceil(s) as u64 * ny.div_ceil(s) as u64;
            n_off * anchors <= AUTO_STRIDE_BUDGET
        })
        .unwrap()
}

/// Sum of squared differences and pair count for one offset, anchors taken
/// every `stride` pixels in each direction.
fn offset_sum(field: &Field2D, dx: usize, dy: isize, stride: usize) -> (f64, u64) {
    let (nx, ny) = (field.nx(), field.ny());
    if dx >= nx || dy.unsigned_abs() >= ny {
        return (0.0, 0);
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for r in (0..ny).step_by(stride) {
        let r2 = r as isize + dy;
        if r2 < 0 || r2 >= ny as isize {
            continue;
        }
        let a = &field.row(r)[..nx - dx];
        let b = &field.row(r2 as usize)[dx..];
        for (x, y) in a.iter().step_by(stride).zip(b.iter().step_by(stride)) {
            let d = x - y;
            sum += d * d;
        }
        count += (nx - dx).div_ceil(stride) as u64;
    }
    (sum, count)
}

/// Binned empirical semi-variogram up to `max_lag` (grid units).
///
/// Bins are integer lags `1..=round(max_lag)`; only non-empty bins are
/// reported. With `stride == 1` every in-range pair is used.
pub fn empirical_variogram(field: &Field2D, max_lag: f64, stride: usize) -> Result<VariogramEstimate, VariogramError> {
    if field.nx() < 2 || field.ny() < 2 {
        return Err(VariogramError::Input("field must be at least 2x2".into()));
    }
    check_lag(field, max_lag)?;
    if stride == 0 {
        return Err(VariogramError::Parameter("stride must be >= 1".into()));
    }

    let offs = offsets(max_lag);
    let sums: Vec<(f64, u64)> = offs.par_iter().map(|&(dx, dy)| offset_sum(field, dx, dy, stride)).collect();

    let n_bins = max_lag.round() as usize + 1;
    let mut acc = vec![(0.0f64, 0u64); n_bins];
    for (&(dx, dy), &(s, n)) in offs.iter().zip(&sums) {
        let d2 = (dx as isize * dx as isize + dy * dy) as f64;
        let b = d2.sqrt().round() as usize;
        acc[b].0 += s;
        acc[b].1 += n;
    }

    let bins = acc
        .iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(b, &(s, n))| LagBin { lag: b as f64, gamma: s / (2.0 * n as f64), pair_count: n })
        .collect();
    Ok(VariogramEstimate { bins, max_lag, subsample_stride: stride })
}

/// Weighted least-squares fit of `c0 * (1 - exp(-h^2 / D))`.
///
/// For a fixed range the sill has a closed form; the range is searched over
/// `[0.5, 4 * max_lag]` by a log-spaced scan followed by golden-section
/// refinement around the best grid point.
pub fn fit_range(v: &VariogramEstimate, model_form: ModelForm) -> Result<FittedVariogram, VariogramError> {
    if v.bins.len() < 3 {
        return Err(VariogramError::InsufficientData(v.bins.len()));
    }
    if v.bins.iter().all(|b| b.gamma == 0.0) {
        return Err(VariogramError::Degenerate);
    }
    let total: f64 = v.bins.iter().map(|b| b.pair_count as f64).sum();
    let pts: Vec<(f64, f64, f64)> = v.bins.iter().map(|b| (b.lag, b.gamma, b.pair_count as f64 / total)).collect();

    // (rss, sill) for a given range
    let profile = |a: f64| {
        let (mut sgg, mut sgy) = (0.0, 0.0);
        for &(h, y, w) in &pts {
            let g = model_shape(h, a, model_form);
            sgg += w * g * g;
            sgy += w * g * y;
        }
        let c0 = if sgg > 0.0 { (sgy / sgg).max(0.0) } else { 0.0 };
        let rss: f64 = pts
            .iter()
            .map(|&(h, y, w)| {
                let r = y - c0 * model_shape(h, a, model_form);
                w * r * r
            })
            .sum();
        (rss, c0)
    };

    let (lo, hi) = (0.5f64, 4.0 * v.max_lag.max(1.0));
    let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo * (ratio * i as f64).exp()).collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(i, &a)| (i, profile(a).0))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut left = grid[best.saturating_sub(1)];
    let mut right = grid[(best + 1).min(GRID_POINTS - 1)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = right - inv_phi * (right - left);
    let mut x2 = left + inv_phi * (right - left);
    let mut f1 = profile(x1).0;
    let mut f2 = profile(x2).0;
    while right - left > GOLDEN_REL_TOL * 0.5 * (left + right) {
        if f1 <= f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - inv_phi * (right - left);
            f1 = profile(x1).0;
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + inv_phi * (right - left);
            f2 = profile(x2).0;
        }
    }
    let range = 0.5 * (left + right);
    let (rss, sill) = profile(range);
    Ok(FittedVariogram { sill, range, model_form, weighted_rss: rss * total })
}

/// Default global lag: a quarter of the shorter side.
pub fn default_max_lag(field: &Field2D) -> f64 {
    field.nx().min(field.ny()) as f64 / 4.0
}

/// Variogram of the whole field at the default lag and automatic stride,
/// with its squared-exponential fit.
pub fn global_variogram(field: &Field2D) -> Result<GlobalVariogram, VariogramError> {
    let max_lag = default_max_lag(field).max(1.0);
    let stride = auto_stride(field.nx(), field.ny(), max_lag);
    let estimate = empirical_variogram(field, max_lag, stride)?;
    let fit = fit_range(&estimate, ModelForm::ASquared)?;
    Ok(GlobalVariogram { estimate, fit })
}

/// Estimated correlation range of the whole field.
pub fn global_range(field: &Field2D) -> Result<FittedVariogram, VariogramError> {
    global_variogram(field).map(|g| g.fit)
}

/// Fitted ranges over non-overlapping `h x h` windows.
///
/// Each window uses `max_lag = h / 2` and every pair. Constant windows
/// record the saturated range `h / 2`.
pub fn local_variogram_stats(field: &Field2D, h: usize) -> Result<LocalStats, VariogramError> {
    if h < 8 {
        return Err(VariogramError::Parameter(format!("window size must be >= 8, got {h}")));
    }
    let (wx, wy) = window_counts(field, h);
    if wx < 2 || wy < 2 {
        return Err(VariogramError::Input(format!(
            "{}x{} field holds {wx}x{wy} complete {h}x{h} windows, need at least 2x2",
            field.nx(),
            field.ny()
        )));
    }
    let max_lag = h as f64 / 2.0;
    let values = map_windows(field, h, |w| {
        let est = empirical_variogram(w, max_lag, 1)?;
        match fit_range(&est, ModelForm::ASquared) {
            Ok(fit) => Ok(fit.range),
            Err(VariogramError::Degenerate) => Ok(max_lag),
            Err(e) => Err(e),
        }
    })?;
    Ok(LocalStats::new("local_vario_range", h, None, wx, wy, values))
}
