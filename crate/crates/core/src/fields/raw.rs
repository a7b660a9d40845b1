//! Headerless IEEE-754 arrays on disk, plus a JSON metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Field2D, FieldError, GrfSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Float64,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Float64 => 8,
        }
    }
}

impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "float32" | "f32" => Ok(DType::Float32),
            "float64" | "f64" => Ok(DType::Float64),
            other => Err(format!("unknown dtype {other:?} (expected float32 or float64)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

impl std::str::FromStr for ByteOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "little" | "le" => Ok(ByteOrder::Little),
            "big" | "be" => Ok(ByteOrder::Big),
            other => Err(format!("unknown byte order {other:?} (expected little or big)")),
        }
    }
}

/// Contents of the `<raw file>.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub field_id: String,
    pub nx: usize,
    pub ny: usize,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GrfSpec>,
}

impl FieldMetadata {
    pub fn of(field: &Field2D, generator: Option<GrfSpec>) -> Self {
        Self {
            field_id: field.field_id.clone(),
            nx: field.nx(),
            ny: field.ny(),
            provenance: field.provenance.clone(),
            generator,
        }
    }
}

/// `data.raw` -> `data.raw.json`
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_metadata(raw: &Path, meta: &FieldMetadata) -> Result<(), FieldError> {
    fs::write(sidecar_path(raw), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_metadata(raw: &Path) -> Result<FieldMetadata, FieldError> {
    let text = fs::read_to_string(sidecar_path(raw))?;
    Ok(serde_json::from_str(&text)?)
}

fn decode(bytes: &[u8], dtype: DType, order: ByteOrder) -> impl Iterator<Item = f64> + '_ {
    bytes.chunks_exact(dtype.width()).map(move |chunk| match (dtype, order) {
        (DType::Float64, ByteOrder::Little) => f64::from_le_bytes(chunk.try_into().unwrap()),
        (DType::Float64, ByteOrder::Big) => f64::from_be_bytes(chunk.try_into().unwrap()),
        (DType::Float32, ByteOrder::Little) => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
        (DType::Float32, ByteOrder::Big) => f32::from_be_bytes(chunk.try_into().unwrap()) as f64,
    })
}

/// Serializes values as a headerless array. `Float32` output narrows each
/// value.
pub fn encode_values(values: &[f64], dtype: DType, order: ByteOrder) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.width());
    for &v in values {
        match (dtype, order) {
            (DType::Float64, ByteOrder::Little) => out.extend_from_slice(&v.to_le_bytes()),
            (DType::Float64, ByteOrder::Big) => out.extend_from_slice(&v.to_be_bytes()),
            (DType::Float32, ByteOrder::Little) => out.extend_from_slice(&(v as f32).to_le_bytes()),
            (DType::Float32, ByteOrder::Big) => out.extend_from_slice(&(v as f32).to_be_bytes()),
        }
    }
    out
}

/// Decodes a headerless array into `f64` values.
pub fn decode_values(bytes: &[u8], dtype: DType, order: ByteOrder) -> Result<Vec<f64>, FieldError> {
    if !bytes.len().is_multiple_of(dtype.width()) {
        return Err(FieldError::Format {
            expected: (bytes.len() / dtype.width() * dtype.width()) as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(decode(bytes, dtype, order).collect())
}

/// Reads a 2D field, or one 2D slice of a 3D volume, from a headerless
/// row-major (C order) array.
///
/// `dims` lists extents slowest-varying first, so a 2D file is
/// `[rows, cols]`. For 3D input the slice at `slice_index` along
/// `slice_axis` keeps the two remaining axes in their original order. 2D input
/// ignores the slice arguments.
pub fn load_raw_field(
    path: &Path,
    dims: &[usize],
    dtype: DType,
    byte_order: ByteOrder,
    slice_axis: usize,
    slice_index: usize,
) -> Result<Field2D, FieldError> {
    if !(dims.len() == 2 || dims.len() == 3) || dims.contains(&0) {
        return Err(FieldError::Dims(format!("expected 2 or 3 positive extents, got {dims:?}")));
    }
    let count: usize = dims.iter().product();
    let expected = (count * dtype.width()) as u64;
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(FieldError::Format { expected, actual });
    }
    let bytes = fs::read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "raw".into());

    if dims.len() == 2 {
        let values = decode(&bytes, dtype, byte_order).collect();
        return Field2D::new(dims[1], dims[0], values, name, format!("{} dims={dims:?}", path.display()));
    }

    if slice_axis > 2 {
        return Err(FieldError::Dims(format!("slice axis {slice_axis} out of range for 3D input")));
    }
    if slice_index >= dims[slice_axis] {
        return Err(FieldError::Index { axis: slice_axis, index: slice_index, len: dims[slice_axis] });
    }
    let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
    let width = dtype.width();
    let at = |i: usize, j: usize, k: usize| {
        let off = ((i * d1 + j) * d2 + k) * width;
        &bytes[off..off + width]
    };
    let (rows, cols) = match slice_axis {
        0 => (d1, d2),
        1 => (d0, d2),
        _ => (d0, d1),
    };
    let mut raw = Vec::with_capacity(rows * cols * width);
    for r in 0..rows {
        for c in 0..cols {
            let cell = match slice_axis {
                0 => at(slice_index, r, c),
                1 => at(r, slice_index, c),
                _ => at(r, c, slice_index),
            };
            raw.extend_from_slice(cell);
        }
    }
    let values = decode(&raw, dtype, byte_order).collect();
    Field2D::new(
        cols,
        rows,
        values,
        format!("{name}_ax{slice_axis}_s{slice_index}"),
        format!("{} dims={dims:?} slice_axis={slice_axis} slice_index={slice_index}", path.display()),
    )
}

/// Writes the field as a headerless row-major array.
pub fn write_raw_field(field: &Field2D, path: &Path, dtype: DType, byte_order: ByteOrder) -> Result<(), FieldError> {
    fs::write(path, encode_values(field.values(), dtype, byte_order))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn two_by_two_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.raw");
        let values = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300];
        fs::write(&path, encode_values(&values, DType::Float64, ByteOrder::Little)).unwrap();
        let f = load_raw_field(&path, &[2, 2], DType::Float64, ByteOrder::Little, 0, 0).unwrap();
        let bits: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    #[test]
    fn slices_match_index_arithmetic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.raw");
        let dims = [4usize, 3, 2];
        let flat: Vec<f64> = (0..24).map(|i| i as f64).collect();
        fs::write(&path, encode_values(&flat, DType::Float64, ByteOrder::Little)).unwrap();

        let s = load_raw_field(&path, &dims, DType::Float64, ByteOrder::Little, 0, 1).unwrap();
        assert_eq!((s.ny(), s.nx()), (3, 2));
        for j in 0..3 {
            for k in 0..2 {
                assert_eq!(s.get(j, k), flat[(3 + j) * 2 + k]);
            }
        }
        let s = load_raw_field(&path, &dims, DType::Float64, ByteOrder::Little, 1, 2).unwrap();
        assert_eq!((s.ny(), s.nx()), (4, 2));
        for i in 0..4 {
            for k in 0..2 {
                assert_eq!(s.get(i, k), flat[(i * 3 + 2) * 2 + k]);
            }
        }
        let s = load_raw_field(&path, &dims, DType::Float64, ByteOrder::Little, 2, 1).unwrap();
        assert_eq!((s.ny(), s.nx()), (4, 3));
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(s.get(i, j), flat[(i * 3 + j) * 2 + 1]);
            }
        }
    }

    #[test]
    fn big_endian_float32_is_widened() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("be.raw");
        let values = [0.1f32, 2.0, -3.25, 7.5];
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
        fs::write(&path, &bytes).unwrap();
        let f = load_raw_field(&path, &[2, 2], DType::Float32, ByteOrder::Big, 0, 0).unwrap();
        assert_eq!(f.values()[0], 0.1f32 as f64);
        assert_eq!(f.values()[2], -3.25);
        let back = encode_values(f.values(), DType::Float32, ByteOrder::Big);
        assert_eq!(back, bytes);
    }

    #[test]
    fn size_mismatch_reports_counts() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.raw");
        fs::write(&path, vec![0u8; 30]).unwrap();
        match load_raw_field(&path, &[2, 2], DType::Float64, ByteOrder::Little, 0, 0) {
            Err(FieldError::Format { expected: 32, actual: 30 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slice_out_of_range() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.raw");
        fs::write(&path, vec![0u8; 2 * 3 * 4 * 8]).unwrap();
        let err = load_raw_field(&path, &[2, 3, 4], DType::Float64, ByteOrder::Little, 0, 2);
        assert!(matches!(err, Err(FieldError::Index { axis: 0, index: 2, len: 2 })));
        assert!(load_raw_field(&path, &[2, 3, 4], DType::Float64, ByteOrder::Little, 3, 0).is_err());
        assert!(load_raw_field(&path, &[24, 2, 1, 1], DType::Float64, ByteOrder::Little, 0, 0).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.raw");
        let spec = GrfSpec::single(8, 8, 2.0, 3);
        let f = crate::fields::generate_grf(&spec).unwrap();
        write_raw_field(&f, &path, DType::Float64, ByteOrder::Little).unwrap();
        write_metadata(&path, &FieldMetadata::of(&f, Some(spec.clone()))).unwrap();
        let meta = read_metadata(&path).unwrap();
        assert_eq!(meta.generator, Some(spec));
        assert_eq!(sidecar_path(&path), dir.path().join("g.raw.json"));
    }
}
