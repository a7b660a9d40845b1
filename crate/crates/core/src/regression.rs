//! Logarithmic regression of compression ratio on a correlation statistic:
//! `CR = alpha + beta * ln(x) + eps`, fitted by ordinary least squares.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::RecordRow;

/// Fewest points a fit accepts.
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("predictor values must be > 0, got {0}")]
    Domain(f64),
    #[error("all predictor values are equal; the slope is undetermined")]
    RankDeficient,
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite compression ratio {0}")]
    NonFinite(f64),
    #[error("unknown predictor {0:?} (expected global_range, local_vario_std or local_svd_std)")]
    UnknownPredictor(String),
}

/// Correlation statistic used as the regressor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    GlobalRange,
    LocalVarioStd,
    LocalSvdStd,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [Predictor::GlobalRange, Predictor::LocalVarioStd, Predictor::LocalSvdStd];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::GlobalRange => "global_range",
            Predictor::LocalVarioStd => "local_vario_std",
            Predictor::LocalSvdStd => "local_svd_std",
        }
    }

    pub fn value(self, row: &RecordRow) -> Option<f64> {
        match self {
            Predictor::GlobalRange => row.global_range,
            Predictor::LocalVarioStd => row.local_vario_std,
            Predictor::LocalSvdStd => row.local_svd_std,
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predictor {
    type Err = RegressionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predictor::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| RegressionError::UnknownPredictor(s.to_owned()))
    }
}

/// Least-squares fit of the model over one group of points. Logarithms are
/// natural.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub r_squared: f64,
    pub residual_std: f64,
}

impl LogFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.alpha + self.beta * x.ln()
    }
}

/// A [`LogFit`] labelled with its predictor and `(codec, eb)` group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub codec: String,
    pub eb: f64,
    pub predictor: Predictor,
    #[serde(flatten)]
    pub fit: LogFit,
}

/// Fits `cr = alpha + beta * ln(x)` to `(x, cr)` points.
pub fn fit_log_regression(points: &[(f64, f64)]) -> Result<LogFit, RegressionError> {
    let n = points.len();
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(*x > 0.0 && x.is_finite())) {
        return Err(RegressionError::Domain(x));
    }
    if let Some(&(_, y)) = points.iter().find(|(_, y)| !y.is_finite()) {
        return Err(RegressionError::NonFinite(y));
    }
    if n < MIN_POINTS {
        return Err(RegressionError::TooFewPoints(n));
    }
    let u: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let nf = n as f64;
    let u_mean = u.iter().sum::<f64>() / nf;
    let y_mean = points.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let mut suu = 0.0;
    let mut suy = 0.0;
    let mut syy = 0.0;
    for (ui, (_, y)) in u.iter().zip(points) {
        let du = ui - u_mean;
        let dy = y - y_mean;
        suu += du * du;
        suy += du * dy;
        syy += dy * dy;
    }
    if suu == 0.0 {
        return Err(RegressionError::RankDeficient);
    }
    let beta = suy / suu;
    let alpha = y_mean - beta * u_mean;
    let rss: f64 = u
        .iter()
        .zip(points)
        .map(|(ui, (_, y))| {
            let r = y - alpha - beta * ui;
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - rss / syy).clamp(0.0, 1.0) };
    Ok(LogFit { alpha, beta, n, r_squared, residual_std: (rss / (nf - 2.0)).sqrt() })
}

/// Points of one `(codec, eb)` group, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPoints {
    pub codec: String,
    pub eb: f64,
    /// `(predictor value, cr, field_id)`.
    pub points: Vec<(f64, f64, String)>,
}

/// A group that could not be fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct SkippedGroup {
    pub codec: String,
    pub eb: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupFits {
    pub fits: Vec<RegressionFit>,
    pub groups: Vec<GroupPoints>,
    pub skipped: Vec<SkippedGroup>,
    /// Rows dropped because the predictor value was missing or not positive.
    pub unusable_rows: usize,
}

/// Partitions rows by `(codec, eb)` and fits each group. Output is sorted
/// by codec, then eb. Groups that cannot be fitted are reported in
/// `skipped`.
pub fn fit_groups(rows: &[RecordRow], predictor: Predictor) -> GroupFits {
    let mut by_group: BTreeMap<(String, u64), Vec<&RecordRow>> = BTreeMap::new();
    for row in rows {
        // eb > 0, so the bit pattern orders like the value
        by_group.entry((row.codec.clone(), row.eb.to_bits())).or_default().push(row);
    }
    let mut unusable_rows = 0;
    let groups: Vec<GroupPoints> = by_group
        .into_iter()
        .map(|((codec, eb), rows)| {
            let points: Vec<(f64, f64, String)> = rows
                .iter()
                .filter_map(|r| match predictor.value(r) {
                    Some(x) if x > 0.0 && x.is_finite() => Some((x, r.cr, r.field_id.clone())),
                    _ => {
                        unusable_rows += 1;
                        None
                    }
                })
                .collect();
            GroupPoints { codec, eb: f64::from_bits(eb), points }
        })
        .collect();

    let results: Vec<Result<RegressionFit, SkippedGroup>> = groups
        .par_iter()
        .map(|g| {
            let xy: Vec<(f64, f64)> = g.points.iter().map(|(x, y, _)| (*x, *y)).collect();
            fit_log_regression(&xy)
                .map(|fit| RegressionFit { codec: g.codec.clone(), eb: g.eb, predictor, fit })
                .map_err(|e| SkippedGroup { codec: g.codec.clone(), eb: g.eb, reason: e.to_string() })
        })
        .collect();
    let mut out = GroupFits { groups, unusable_rows, ..Default::default() };
    for r in results {
        match r {
            Ok(f) => out.fits.push(f),
            Err(s) => out.skipped.push(s),
        }
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either sample is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn row(codec: &str, eb: f64, x: Option<f64>, cr: f64) -> RecordRow {
        RecordRow {
            field_id: format!("f{}", x.unwrap_or(0.0)),
            codec: codec.into(),
            eb,
            original_bytes: 800,
            compressed_bytes: 100,
            cr,
            max_abs_error: 0.0,
            global_range: x,
            local_vario_std: None,
            local_svd_std: None,
            encode_seconds: None,
            decode_seconds: None,
        }
    }

    #[test]
    fn noiseless_model_is_recovered() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 2.0 + 3.0 * x.ln())).collect();
        let fit = fit_log_regression(&pts).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-10);
        assert!((fit.beta - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!(fit.residual_std < 1e-10);
    }

    #[test]
    fn domain_and_rank_errors() {
        assert_eq!(fit_log_regression(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]), Err(RegressionError::Domain(0.0)));
        assert!(matches!(fit_log_regression(&[(-1.0, 1.0); 3]), Err(RegressionError::Domain(_))));
        assert_eq!(fit_log_regression(&[(3.0, 1.0), (3.0, 2.0), (3.0, 5.0)]), Err(RegressionError::RankDeficient));
        assert_eq!(fit_log_regression(&[(1.0, 1.0), (2.0, 2.0)]), Err(RegressionError::TooFewPoints(2)));
        assert!("local_svd_std".parse::<Predictor>().is_ok());
        assert!(matches!("psnr".parse::<Predictor>(), Err(RegressionError::UnknownPredictor(_))));
    }

    #[test]
    fn noisy_fit_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.7).collect();
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 5.0 + 1.5 * x.ln() + noise.sample(&mut rng))).collect();
        let fit = fit_log_regression(&pts).unwrap();
        // textbook OLS standard errors with known sigma
        let u: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let um = u.iter().sum::<f64>() / 50.0;
        let suu: f64 = u.iter().map(|v| (v - um).powi(2)).sum();
        let se_beta = 0.1 / suu.sqrt();
        let se_alpha = 0.1 * (1.0 / 50.0 + um * um / suu).sqrt();
        assert!((fit.beta - 1.5).abs() < 3.0 * se_beta);
        assert!((fit.alpha - 5.0).abs() < 3.0 * se_alpha);
    }

    #[test]
    fn reordering_and_log_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut pts: Vec<(f64, f64)> =
            (1..30).map(|i| (i as f64, 1.0 + 0.8 * (i as f64).ln() + noise.sample(&mut rng))).collect();
        let base = fit_log_regression(&pts).unwrap();
        pts.shuffle(&mut rng);
        let shuffled = fit_log_regression(&pts).unwrap();
        assert!((base.alpha - shuffled.alpha).abs() < 1e-12);
        assert!((base.beta - shuffled.beta).abs() < 1e-12);
        let c = 7.5f64;
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (c * x, y)).collect();
        let s = fit_log_regression(&scaled).unwrap();
        assert!((s.beta - base.beta).abs() < 1e-10);
        assert!((s.alpha - (base.alpha - base.beta * c.ln())).abs() < 1e-10);
    }

    #[test]
    fn groups_match_independent_fits() {
        let mut rows = Vec::new();
        for (k, eb) in [1e-2, 1e-5, 1e-3, 1e-4].into_iter().enumerate() {
            for x in [2.0, 4.0, 8.0, 16.0] {
                rows.push(row("sz-like", eb, Some(x), 3.0 + k as f64 + x.ln() * (k + 1) as f64 + x * 1e-3));
            }
        }
        rows.push(row("zfp-like", 1e-3, Some(2.0), 1.0));
        rows.push(row("zfp-like", 1e-3, None, 1.0));
        let out = fit_groups(&rows, Predictor::GlobalRange);
        assert_eq!(out.fits.len(), 4);
        let ebs: Vec<f64> = out.fits.iter().map(|f| f.eb).collect();
        assert_eq!(ebs, vec![1e-5, 1e-4, 1e-3, 1e-2]);
        for f in &out.fits {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.codec == f.codec && r.eb == f.eb)
                .map(|r| (r.global_range.unwrap(), r.cr))
                .collect();
            assert_eq!(fit_log_regression(&pts).unwrap(), f.fit);
        }
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].codec, "zfp-like");
        assert_eq!(out.unusable_rows, 1);

        let empty = fit_groups(&[], Predictor::LocalSvdStd);
        assert!(empty.fits.is_empty() && empty.skipped.is_empty());
    }

    #[test]
    fn spearman_ranks() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }
}
