use serde::{Deserialize, Serialize};

use super::{CodecError, CompressedBlob};
use crate::fields::Field2D;

/// Bytes per value in the working precision.
pub const WORKING_WIDTH: usize = std::mem::size_of::<f64>();

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub encode_seconds: f64,
    pub decode_seconds: f64,
}

/// Outcome of compressing one field with one codec at one error bound.
///
/// `compressed_bytes` counts the codec payload; the fixed `CSCX` container
/// header is excluded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionRecord {
    pub field_id: String,
    pub codec_id: String,
    pub eb: f64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub compression_ratio: f64,
    pub max_abs_error: f64,
    /// Peak signal-to-noise ratio over the original value range; `None` for
    /// lossless reconstructions or constant fields.
    pub psnr: Option<f64>,
    pub encode_seconds: f64,
    pub decode_seconds: f64,
}

pub fn compression_ratio(original_bytes: u64, compressed_bytes: u64) -> f64 {
    original_bytes as f64 / compressed_bytes as f64
}

pub fn compression_metrics(
    original: &Field2D,
    reconstructed: &Field2D,
    blob: &CompressedBlob,
    timings: Timings,
) -> Result<CompressionRecord, CodecError> {
    if original.nx() != reconstructed.nx() || original.ny() != reconstructed.ny() {
        return Err(CodecError::InvalidRequest(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            original.nx(),
            original.ny(),
            reconstructed.nx(),
            reconstructed.ny()
        )));
    }
    let original_bytes = (original.len() * WORKING_WIDTH) as u64;
    let compressed_bytes = blob.payload.len().max(1) as u64;

    let mut max_abs_error = 0.0f64;
    let mut sq = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&a, &b) in original.values().iter().zip(reconstructed.values()) {
        let d = (a - b).abs();
        max_abs_error = max_abs_error.max(d);
        sq += d * d;
        lo = lo.min(a);
        hi = hi.max(a);
    }
    let mse = sq / original.len() as f64;
    let range = hi - lo;
    let psnr = (mse > 0.0 && range > 0.0).then(|| 20.0 * range.log10() - 10.0 * mse.log10());

    Ok(CompressionRecord {
        field_id: original.field_id.clone(),
        codec_id: blob.codec_id.clone(),
        eb: blob.eb,
        original_bytes,
        compressed_bytes,
        compression_ratio: compression_ratio(original_bytes, compressed_bytes),
        max_abs_error,
        psnr,
        encode_seconds: timings.encode_seconds,
        decode_seconds: timings.decode_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(payload: usize) -> CompressedBlob {
        CompressedBlob { codec_id: "test".into(), version: 1, nx: 0, ny: 0, eb: 0.1, payload: vec![0; payload] }
    }

    #[test]
    fn ratio_definition() {
        assert_eq!(compression_ratio(1000, 100), 10.0);
        // 125 f64 values = 1000 bytes
        let f = Field2D::constant(25, 5, 1.0).unwrap();
        let r = compression_metrics(&f, &f, &blob(100), Timings::default()).unwrap();
        assert_eq!(r.original_bytes, 1000);
        assert_eq!(r.compression_ratio, 10.0);
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.psnr, None);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Field2D::constant(4, 4, 0.0).unwrap();
        let b = Field2D::constant(4, 5, 0.0).unwrap();
        assert!(compression_metrics(&a, &b, &blob(1), Timings::default()).is_err());
    }

    #[test]
    fn matches_elementwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Field2D::from_fn(30, 20, "a", |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let b = Field2D::from_fn(30, 20, "b", |r, c| a.get(r, c) + rng.random_range(-0.01..0.01)).unwrap();
        let rec = compression_metrics(&a, &b, &blob(17), Timings::default()).unwrap();
        let mut worst = 0.0f64;
        for r in 0..20 {
            for c in 0..30 {
                worst = worst.max((a.get(r, c) - b.get(r, c)).abs());
            }
        }
        assert_eq!(rec.max_abs_error, worst);
        assert_eq!(rec.compressed_bytes, 17);
        assert!(rec.psnr.unwrap() > 30.0);
    }
}
