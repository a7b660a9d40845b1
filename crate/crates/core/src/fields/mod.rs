//! 2D fields: the common payload of every statistic and codec.

mod grf;
mod raw;

use thiserror::Error;

pub use grf::{generate_grf, generate_half_and_half, GrfSpec, RangeComponent};
pub use raw::{
    decode_values, encode_values, load_raw_field, read_metadata, sidecar_path, write_metadata, write_raw_field,
    ByteOrder, DType, FieldMetadata,
};

/// Errors raised while building, generating or loading fields.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(
        "circulant embedding is not positive definite: clipped {clipped_fraction:.3e} of the \
         spectral mass (limit {limit:.1e})"
    )]
    Embedding { clipped_fraction: f64, limit: f64 },
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    Format { expected: u64, actual: u64 },
    #[error("slice index {index} out of range for axis {axis} of length {len}")]
    Index { axis: usize, index: usize, len: usize },
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A 2D grid of finite reals in row-major order: `values[row * nx + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    pub field_id: String,
    pub provenance: String,
}

impl Field2D {
    /// Builds a field, checking that it is at least 2x2, that `values` holds
    /// exactly `nx * ny` entries and that every entry is finite.
    pub fn new(
        nx: usize,
        ny: usize,
        values: Vec<f64>,
        field_id: impl Into<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::Invalid(format!("field must be at least 2x2, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(FieldError::Invalid(format!(
                "expected {} values for {nx}x{ny}, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::Invalid(format!("non-finite value {} at index {pos}", values[pos])));
        }
        Ok(Self { nx, ny, values, field_id: field_id.into(), provenance: provenance.into() })
    }

    /// Field of `nx * ny` copies of `value`.
    pub fn constant(nx: usize, ny: usize, value: f64) -> Result<Self, FieldError> {
        Self::new(nx, ny, vec![value; nx * ny], format!("const_{value}"), format!("constant {value}"))
    }

    /// Builds a field by evaluating `f(row, col)` at every grid point.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        field_id: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, FieldError> {
        let mut values = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            for col in 0..nx {
                values.push(f(row, col));
            }
        }
        let id = field_id.into();
        Self::new(nx, ny, values, id.clone(), id)
    }

    /// Number of columns.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of rows.
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.nx + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.nx..(row + 1) * self.nx]
    }

    pub fn with_id(mut self, field_id: impl Into<String>) -> Self {
        self.field_id = field_id.into();
        self
    }

    /// Copies the `height x width` sub-grid whose top-left corner is
    /// `(row0, col0)`.
    pub fn window(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Field2D, FieldError> {
        if row0 + height > self.ny || col0 + width > self.nx {
            return Err(FieldError::Invalid(format!(
                "window {height}x{width} at ({row0},{col0}) exceeds {}x{} field",
                self.ny, self.nx
            )));
        }
        let mut values = Vec::with_capacity(height * width);
        for row in row0..row0 + height {
            values.extend_from_slice(&self.values[row * self.nx + col0..row * self.nx + col0 + width]);
        }
        Field2D::new(
            width,
            height,
            values,
            format!("{}[{row0}:{},{col0}:{}]", self.field_id, row0 + height, col0 + width),
            self.provenance.clone(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest pointwise absolute difference; `None` when the shapes differ.
    pub fn max_abs_diff(&self, other: &Field2D) -> Option<f64> {
        if self.nx != other.nx || self.ny != other.ny {
            return None;
        }
        Some(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}
