//! Per-window statistics shared by the local variogram and local SVD
//! summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields::Field2D;

/// One value per complete `H x H` tile of a field, with population summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalStats {
    pub statistic_name: String,
    #[serde(rename = "H")]
    pub window_size: usize,
    /// SVD energy threshold; absent for variogram statistics.
    pub threshold: Option<f64>,
    /// Number of complete windows per row and per column of windows.
    pub windows_x: usize,
    pub windows_y: usize,
    /// Row-major over the window grid.
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl LocalStats {
    pub fn new(
        statistic_name: impl Into<String>,
        window_size: usize,
        threshold: Option<f64>,
        windows_x: usize,
        windows_y: usize,
        values: Vec<f64>,
    ) -> Self {
        let (mean, std) = population_mean_std(&values);
        Self { statistic_name: statistic_name.into(), window_size, threshold, windows_x, windows_y, values, mean, std }
    }
}

/// Population mean and standard deviation, accumulated in slice order.
pub fn population_mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Number of complete `h x h` windows along x and y.
pub fn window_counts(field: &Field2D, h: usize) -> (usize, usize) {
    if h == 0 {
        return (0, 0);
    }
    (field.nx() / h, field.ny() / h)
}

/// Applies `f` to every complete `h x h` tile (partial edge tiles are
/// dropped) and returns the results in row-major window order. Tiles are
/// processed in parallel; the output order does not depend on scheduling.
pub fn map_windows<T, E, F>(field: &Field2D, h: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(&Field2D) -> Result<T, E> + Sync,
{
    let (wx, wy) = window_counts(field, h);
    (0..wx * wy)
        .into_par_iter()
        .map(|w| {
            let (row0, col0) = ((w / wx) * h, (w % wx) * h);
            let window = field.window(row0, col0, h, h).expect("complete windows lie inside the field");
            f(&window)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_is_population_std() {
        let (m, s) = population_mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn windows_drop_partial_tiles() {
        let f = Field2D::from_fn(70, 40, "idx", |r, c| (r * 70 + c) as f64).unwrap();
        assert_eq!(window_counts(&f, 16), (4, 2));
        let firsts: Vec<f64> = map_windows::<_, (), _>(&f, 16, |w| Ok(w.values()[0])).unwrap();
        assert_eq!(firsts.len(), 8);
        assert_eq!(firsts[1], 16.0);
        assert_eq!(firsts[4], (16 * 70) as f64);
    }
}
