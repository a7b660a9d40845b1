//! Gaussian random fields with squared-exponential covariance, sampled
//! exactly by circulant embedding.
//!
//! The covariance between grid points `x_i`, `x_j` is
//! `variance * sum_c w_c * exp(-|x_i - x_j|^2 / a_c^2)`. Each component is
//! sampled independently with variance `w_c * variance` and the realizations
//! are summed.
//!
//! Randomness comes from a single `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`; standard normals are drawn with the ziggurat
//! sampler of `rand_distr::StandardNormal`. Components consume the stream in
//! declaration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Field2D, FieldError};

/// Largest fraction of spectral mass that may be clipped from negative
/// embedding eigenvalues before sampling is refused.
pub const MAX_CLIPPED_FRACTION: f64 = 1e-3;

/// Padded grids extend at least this many ranges so the covariance has
/// decayed to ~exp(-16) at the wrap-around point.
const RANGE_PADDING: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeComponent {
    /// Correlation range `a` in grid units.
    pub range: f64,
    /// Share of the total variance carried by this component.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub nx: usize,
    pub ny: usize,
    pub components: Vec<RangeComponent>,
    pub variance: f64,
    #[serde(default)]
    pub mean: f64,
    pub seed: u64,
}

impl GrfSpec {
    /// Grid size of the synthetic fields in the reference study.
    pub const DEFAULT_DIM: usize = 1028;

    /// Single-range, unit-variance spec.
    pub fn single(nx: usize, ny: usize, range: f64, seed: u64) -> Self {
        Self { nx, ny, components: vec![RangeComponent { range, weight: 1.0 }], variance: 1.0, mean: 0.0, seed }
    }

    /// Unit-variance spec whose ranges contribute equal variance.
    pub fn equal_mix(nx: usize, ny: usize, ranges: &[f64], seed: u64) -> Self {
        let weight = 1.0 / ranges.len() as f64;
        Self {
            nx,
            ny,
            components: ranges.iter().map(|&range| RangeComponent { range, weight }).collect(),
            variance: 1.0,
            mean: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(FieldError::InvalidSpec(format!("grid must be at least 2x2, got {}x{}", self.nx, self.ny)));
        }
        if self.components.is_empty() {
            return Err(FieldError::InvalidSpec("no range components".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.range.is_finite() && c.range > 0.0) {
                return Err(FieldError::InvalidSpec(format!("component {i}: range must be > 0, got {}", c.range)));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(FieldError::InvalidSpec(format!("component {i}: weight must be > 0, got {}", c.weight)));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FieldError::InvalidSpec(format!("component weights must sum to 1, got {total}")));
        }
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(FieldError::InvalidSpec(format!("variance must be >= 0, got {}", self.variance)));
        }
        if !self.mean.is_finite() {
            return Err(FieldError::InvalidSpec("mean must be finite".into()));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let comps: Vec<String> = self.components.iter().map(|c| format!("a={}:w={}", c.range, c.weight)).collect();
        format!(
            "grf nx={} ny={} var={} mean={} seed={} [{}]",
            self.nx,
            self.ny,
            self.variance,
            self.mean,
            self.seed,
            comps.join(",")
        )
    }

    fn default_id(&self) -> String {
        let ranges: Vec<String> = self.components.iter().map(|c| c.range.to_string()).collect();
        format!("grf_a{}_s{}", ranges.join("+"), self.seed)
    }
}

/// Draws one realization of the field described by `spec`.
pub fn generate_grf(spec: &GrfSpec) -> Result<Field2D, FieldError> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let mut values = vec![spec.mean; nx * ny];
    if spec.variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for comp in &spec.components {
            let part = sample_component(nx, ny, comp.range, comp.weight * spec.variance, &mut rng)?;
            for (v, p) in values.iter_mut().zip(part) {
                *v += p;
            }
        }
    }
    Field2D::new(nx, ny, values, spec.default_id(), spec.describe())
}

/// Left half from a GRF of range `left_range`, right half from an
/// independent GRF of range `right_range`. Both halves use unit variance; the
/// right half is drawn with `seed + 1`.
pub fn generate_half_and_half(
    nx: usize,
    ny: usize,
    left_range: f64,
    right_range: f64,
    seed: u64,
) -> Result<Field2D, FieldError> {
    let left = generate_grf(&GrfSpec::single(nx, ny, left_range, seed))?;
    let right = generate_grf(&GrfSpec::single(nx, ny, right_range, seed.wrapping_add(1)))?;
    let split = nx / 2;
    let values = (0..ny)
        .flat_map(|row| (0..nx).map(move |col| (row, col)))
        .map(|(row, col)| if col < split { left.get(row, col) } else { right.get(row, col) })
        .collect();
    Field2D::new(
        nx,
        ny,
        values,
        format!("halfhalf_a{left_range}+{right_range}_s{seed}"),
        format!(
            "half-and-half nx={nx} ny={ny} left a={left_range} seed={seed} | right a={right_range} seed={}",
            seed.wrapping_add(1)
        ),
    )
}

/// Smallest even 5-smooth integer `>= n`.
fn fft_size(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        if m.is_multiple_of(2) {
            let mut r = m;
            for p in [2, 3, 5] {
                while r.is_multiple_of(p) {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

fn padded_len(n: usize, range: f64) -> usize {
    fft_size((2 * n).max((RANGE_PADDING * range).ceil() as usize))
}

/// Eigenvalues of the block-circulant embedding of the covariance on an
/// `rows x cols` torus, with negative ones clipped and the rest rescaled to
/// keep the total variance.
fn embedding_spectrum(
    rows: usize,
    cols: usize,
    range: f64,
    variance: f64,
    planner: &mut FftPlanner<f64>,
) -> Result<Vec<f64>, FieldError> {
    let inv_a2 = 1.0 / (range * range);
    let mut buf = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let dr = r.min(rows - r) as f64;
        for c in 0..cols {
            let dc = c.min(cols - c) as f64;
            buf.push(Complex64::new(variance * (-(dr * dr + dc * dc) * inv_a2).exp(), 0.0));
        }
    }
    fft2d(&mut buf, rows, cols, planner);

    let mut lambda: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let total: f64 = lambda.iter().sum();
    let abs_total: f64 = lambda.iter().map(|l| l.abs()).sum();
    let negative: f64 = lambda.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    if abs_total > 0.0 && negative > 0.0 {
        let clipped_fraction = negative / abs_total;
        if clipped_fraction > MAX_CLIPPED_FRACTION {
            return Err(FieldError::Embedding { clipped_fraction, limit: MAX_CLIPPED_FRACTION });
        }
        let positive = total + negative;
        let scale = total / positive;
        for l in &mut lambda {
            *l = if *l < 0.0 { 0.0 } else { *l * scale };
        }
    }
    Ok(lambda)
}

fn sample_component(
    nx: usize,
    ny: usize,
    range: f64,
    variance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, FieldError> {
    let rows = padded_len(ny, range);
    let cols = padded_len(nx, range);
    let mut planner = FftPlanner::new();
    let lambda = embedding_spectrum(rows, cols, range, variance, &mut planner)?;

    let n = (rows * cols) as f64;
    let mut buf: Vec<Complex64> = lambda
        .iter()
        .map(|&l| {
            let s = (l / n).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(s * re, s * im)
        })
        .collect();
    fft2d(&mut buf, rows, cols, &mut planner);

    let mut out = Vec::with_capacity(nx * ny);
    for r in 0..ny {
        out.extend(buf[r * cols..r * cols + nx].iter().map(|z| z.re));
    }
    Ok(out)
}

/// Unnormalized forward 2D DFT of a row-major `rows x cols` buffer.
fn fft2d(buf: &mut [Complex64], rows: usize, cols: usize, planner: &mut FftPlanner<f64>) {
    planner.plan_fft_forward(cols).process(buf);
    let mut t = vec![Complex64::default(); rows * cols];
    transpose(buf, &mut t, rows, cols);
    planner.plan_fft_forward(rows).process(&mut t);
    transpose(&t, buf, cols, rows);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mean over realizations of the lag-`h` product averaged over the grid
    /// (both axes), with its Monte-Carlo standard error.
    fn lag_covariance(fields: &[Field2D], h: usize) -> (f64, f64) {
        let per: Vec<f64> = fields
            .iter()
            .map(|f| {
                let (nx, ny) = (f.nx(), f.ny());
                let mut sum = 0.0;
                let mut count = 0usize;
                for r in 0..ny {
                    for c in 0..nx {
                        if c + h < nx {
                            sum += f.get(r, c) * f.get(r, c + h);
                            count += 1;
                        }
                        if r + h < ny {
                            sum += f.get(r, c) * f.get(r + h, c);
                            count += 1;
                        }
                    }
                }
                sum / count as f64
            })
            .collect();
        let m = per.len() as f64;
        let mean = per.iter().sum::<f64>() / m;
        let var = per.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }

    #[test]
    fn zero_variance_is_constant_zero() {
        let mut spec = GrfSpec::single(64, 64, 4.0, 9);
        spec.variance = 0.0;
        let f = generate_grf(&spec).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_field() {
        let spec = GrfSpec::equal_mix(48, 40, &[3.0, 9.0], 77);
        assert_eq!(generate_grf(&spec).unwrap(), generate_grf(&spec).unwrap());
        let other = GrfSpec { seed: 78, ..spec.clone() };
        assert_ne!(generate_grf(&spec).unwrap().values(), generate_grf(&other).unwrap().values());
    }

    #[test]
    fn non_square_shape() {
        let f = generate_grf(&GrfSpec::single(50, 20, 3.0, 1)).unwrap();
        assert_eq!((f.nx(), f.ny(), f.len()), (50, 20, 1000));
    }

    #[test]
    fn validation_names_the_invariant() {
        let mut spec = GrfSpec::single(16, 16, 4.0, 0);
        spec.components[0].weight = 0.7;
        let err = generate_grf(&spec).unwrap_err().to_string();
        assert!(err.contains("sum to 1"), "{err}");

        let mut spec = GrfSpec::single(16, 16, -1.0, 0);
        assert!(generate_grf(&spec).unwrap_err().to_string().contains("range"));
        spec.components[0].range = 2.0;
        spec.variance = -0.5;
        assert!(generate_grf(&spec).unwrap_err().to_string().contains("variance"));
        assert!(generate_grf(&GrfSpec::single(1, 16, 2.0, 0)).is_err());
        assert!(generate_grf(&GrfSpec::equal_mix(8, 8, &[], 0)).is_err());
    }

    #[test]
    fn default_dims() {
        assert_eq!(GrfSpec::DEFAULT_DIM, 1028);
    }

    #[test]
    fn fft_sizes_are_smooth_and_even() {
        assert_eq!(fft_size(128), 128);
        assert_eq!(fft_size(2056), 2160);
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(31), 32);
        assert_eq!(padded_len(64, 32.0), 256);
    }

    #[test]
    fn spectrum_preserves_total_variance() {
        let mut planner = FftPlanner::new();
        let lambda = embedding_spectrum(128, 96, 6.0, 2.5, &mut planner).unwrap();
        assert!(lambda.iter().all(|&l| l >= 0.0));
        let mean = lambda.iter().sum::<f64>() / lambda.len() as f64;
        assert!((mean - 2.5).abs() < 1e-9, "{mean}");
    }

    #[test]
    fn under_padded_embedding_is_refused() {
        // a torus of 16 cells cannot hold a range-20 squared exponential
        let mut planner = FftPlanner::new();
        let err = embedding_spectrum(16, 16, 20.0, 1.0, &mut planner).unwrap_err();
        assert!(matches!(err, FieldError::Embedding { .. }));
    }

    #[test]
    fn monte_carlo_covariance_matches_model() {
        for a in [2.0, 4.0, 8.0] {
            let fields: Vec<Field2D> =
                (0..200).map(|s| generate_grf(&GrfSpec::single(64, 64, a, 1000 + s)).unwrap()).collect();
            for h in 0..=3usize {
                let (mean, se) = lag_covariance(&fields, h);
                let expected = (-((h * h) as f64) / (a * a)).exp();
                assert!((mean - expected).abs() <= 3.0 * se, "a={a} h={h}: {mean} vs {expected} (se {se})");
            }
        }
    }

    #[test]
    fn equal_ranges_collapse_to_single_component() {
        let mixed: Vec<Field2D> =
            (0..200).map(|s| generate_grf(&GrfSpec::equal_mix(64, 64, &[4.0, 4.0], 5000 + s)).unwrap()).collect();
        for h in 0..=3usize {
            let (mean, se) = lag_covariance(&mixed, h);
            let expected = (-((h * h) as f64) / 16.0).exp();
            assert!((mean - expected).abs() <= 3.0 * se, "h={h}: {mean} vs {expected}");
        }
    }

    #[test]
    fn two_range_covariance_is_weighted_sum() {
        let fields: Vec<Field2D> =
            (0..200).map(|s| generate_grf(&GrfSpec::equal_mix(64, 64, &[2.0, 8.0], 9000 + s)).unwrap()).collect();
        for h in 0..=3usize {
            let h2 = (h * h) as f64;
            let expected = 0.5 * (-h2 / 4.0).exp() + 0.5 * (-h2 / 64.0).exp();
            let (mean, se) = lag_covariance(&fields, h);
            assert!((mean - expected).abs() <= 3.0 * se, "h={h}: {mean} vs {expected}");
        }
    }

    #[test]
    fn sample_mean_is_near_zero() {
        for (a, seed) in [(2.0, 1u64), (4.0, 2), (8.0, 3)] {
            let f = generate_grf(&GrfSpec::single(256, 256, a, seed)).unwrap();
            let ess = (256.0 * 256.0) / (a * a);
            assert!(f.mean().abs() <= 4.0 / ess.sqrt(), "a={a}: mean {}", f.mean());
        }
    }

    #[test]
    fn half_and_half_stitches_columns() {
        let f = generate_half_and_half(32, 16, 2.0, 12.0, 4).unwrap();
        let left = generate_grf(&GrfSpec::single(32, 16, 2.0, 4)).unwrap();
        let right = generate_grf(&GrfSpec::single(32, 16, 12.0, 5)).unwrap();
        assert_eq!(f.get(3, 15), left.get(3, 15));
        assert_eq!(f.get(3, 16), right.get(3, 16));
    }
}
