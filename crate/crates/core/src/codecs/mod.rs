//! Absolute-error-bounded lossy codecs.
//!
//! Every codec guarantees `|original - reconstructed| <= eb` at every grid
//! point. Three are built in:
//!
//! * [`PredictorCodec`] (`sz-like`): 16x16 blocks, Lorenzo or plane
//!   prediction, linear quantization, Huffman and deflate.
//! * [`TransformCodec`] (`zfp-like`): 4x4 blocks, block floating point,
//!   orthonormal DCT-II and embedded bit-plane coding.
//! * [`MultilevelCodec`] (`mgard-like`): orthonormal Haar pyramid with
//!   uniform coefficient quantization and a sparse patch list.
//!
//! [`ExternalCodec`] runs user-supplied compressor commands.

mod bits;
mod blob;
mod external;
pub mod huffman;
pub mod lossless;
mod metrics;
mod multilevel;
mod predictor;
mod transform;

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::fields::{Field2D, FieldError};

pub use blob::CompressedBlob;
pub use external::ExternalCodec;
pub use metrics::{compression_metrics, compression_ratio, CompressionRecord, Timings};
pub use multilevel::MultilevelCodec;
pub use predictor::{PredictorCodec, PredictorMode};
pub use transform::TransformCodec;

/// Error bounds of the reference experimental protocol.
pub const PROTOCOL_ERROR_BOUNDS: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-2];

/// Canonical ids of the built-in codecs.
pub const BUILTIN_CODECS: [&str; 3] = ["sz-like", "zfp-like", "mgard-like"];

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown codec {0:?}")]
    UnknownCodec(String),
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("blob was written by {codec} stream version {found}, this build reads version {expected}")]
    Version { codec: String, expected: u8, found: u8 },
    #[error("blob holds {found:?} data, not {expected:?}")]
    CodecMismatch { expected: String, found: String },
    #[error("error bound violated: max abs error {max_error:e} > eb {eb:e}")]
    BoundViolation { max_error: f64, eb: f64 },
    #[error("external codec failed: {message}\n{diagnostics}")]
    External { message: String, diagnostics: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Free-form codec options, e.g. `lossless=none`.
pub type CodecOptions = BTreeMap<String, String>;

pub trait Codec: Send + Sync {
    /// Identifier written into the blob header.
    fn id(&self) -> &str;

    /// Stream version written into the blob header.
    fn version(&self) -> u8;

    /// Encodes the field into a codec-specific payload.
    fn encode(&self, field: &Field2D, eb: f64) -> Result<Vec<u8>, CodecError>;

    /// Decodes a payload into `nx * ny` row-major values.
    fn decode(&self, nx: usize, ny: usize, eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError>;

    fn compress(&self, field: &Field2D, eb: f64) -> Result<CompressedBlob, CodecError> {
        check_error_bound(eb)?;
        if field.nx() > u32::MAX as usize || field.ny() > u32::MAX as usize {
            return Err(CodecError::InvalidRequest("field too large for the container".into()));
        }
        let payload = self.encode(field, eb)?;
        Ok(CompressedBlob {
            codec_id: self.id().to_owned(),
            version: self.version(),
            nx: field.nx(),
            ny: field.ny(),
            eb,
            payload,
        })
    }

    fn decompress(&self, blob: &CompressedBlob) -> Result<Field2D, CodecError> {
        if blob.codec_id != self.id() {
            return Err(CodecError::CodecMismatch { expected: self.id().to_owned(), found: blob.codec_id.clone() });
        }
        if blob.version != self.version() {
            return Err(CodecError::Version {
                codec: blob.codec_id.clone(),
                expected: self.version(),
                found: blob.version,
            });
        }
        check_error_bound(blob.eb).map_err(|_| CodecError::Corrupt("bad error bound in header".into()))?;
        if blob.nx < 2 || blob.ny < 2 {
            return Err(CodecError::Corrupt(format!("bad dimensions {}x{}", blob.nx, blob.ny)));
        }
        let values = self.decode(blob.nx, blob.ny, blob.eb, &blob.payload)?;
        if values.len() != blob.nx * blob.ny {
            return Err(CodecError::Corrupt("decoded size does not match header".into()));
        }
        Field2D::new(blob.nx, blob.ny, values, "reconstructed", format!("decoded by {}", blob.codec_id))
            .map_err(|e| CodecError::Corrupt(e.to_string()))
    }
}

pub(crate) fn check_error_bound(eb: f64) -> Result<(), CodecError> {
    if eb.is_finite() && eb > 0.0 {
        Ok(())
    } else {
        Err(CodecError::InvalidRequest(format!("error bound must be finite and > 0, got {eb}")))
    }
}

fn reject_unknown(options: &CodecOptions, known: &[&str]) -> Result<(), CodecError> {
    match options.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(CodecError::InvalidRequest(format!("unknown option {k:?} (accepted: {})", known.join(", ")))),
        None => Ok(()),
    }
}

/// Instantiates a codec by id. Aliases `predictor`, `transform` and
/// `multilevel` map to the built-ins.
pub fn build_codec(codec_id: &str, options: &CodecOptions) -> Result<Box<dyn Codec>, CodecError> {
    match codec_id {
        "sz-like" | "predictor" => {
            reject_unknown(options, &["lossless", "predictor"])?;
            let mut c = PredictorCodec::default();
            if let Some(s) = options.get("lossless") {
                c.lossless = lossless::LosslessStage::parse(s)?;
            }
            if let Some(p) = options.get("predictor") {
                c.mode = PredictorMode::parse(p)?;
            }
            Ok(Box::new(c))
        }
        "zfp-like" | "transform" => {
            reject_unknown(options, &[])?;
            Ok(Box::new(TransformCodec))
        }
        "mgard-like" | "multilevel" => {
            reject_unknown(options, &["lossless"])?;
            let mut c = MultilevelCodec::default();
            if let Some(s) = options.get("lossless") {
                c.lossless = lossless::LosslessStage::parse(s)?;
            }
            Ok(Box::new(c))
        }
        "external" => {
            reject_unknown(options, &["compress", "decompress", "name"])?;
            let get = |k: &str| {
                options
                    .get(k)
                    .cloned()
                    .ok_or_else(|| CodecError::InvalidRequest(format!("external codec needs option {k:?}")))
            };
            let name = options.get("name").map(String::as_str).unwrap_or("external");
            Ok(Box::new(ExternalCodec::new(name, get("compress")?, get("decompress")?)?))
        }
        other => Err(CodecError::UnknownCodec(other.to_owned())),
    }
}

/// One compression job.
#[derive(Clone, Debug)]
pub struct CodecRequest<'a> {
    pub field: &'a Field2D,
    pub abs_error_bound: f64,
    pub codec_id: String,
    pub codec_options: CodecOptions,
}

pub fn compress(request: &CodecRequest<'_>) -> Result<CompressedBlob, CodecError> {
    check_error_bound(request.abs_error_bound)?;
    build_codec(&request.codec_id, &request.codec_options)?.compress(request.field, request.abs_error_bound)
}

/// Decompresses a blob from one of the built-in codecs.
pub fn decompress(blob: &CompressedBlob) -> Result<Field2D, CodecError> {
    if blob.codec_id.starts_with("external") {
        return Err(CodecError::InvalidRequest(
            "external blobs need the codec's decompress command; use build_codec".into(),
        ));
    }
    build_codec(&blob.codec_id, &CodecOptions::new())?.decompress(blob)
}

/// Output of [`run_codec`].
#[derive(Clone, Debug)]
pub struct CodecRun {
    pub blob: CompressedBlob,
    pub reconstructed: Field2D,
    pub record: CompressionRecord,
}

/// Compresses, decompresses, measures, and checks the bound. A violation is
/// an error.
pub fn run_codec(codec: &dyn Codec, field: &Field2D, eb: f64) -> Result<CodecRun, CodecError> {
    let t0 = Instant::now();
    let blob = codec.compress(field, eb)?;
    let t1 = Instant::now();
    let reconstructed = codec.decompress(&blob)?;
    let t2 = Instant::now();
    let timings = Timings { encode_seconds: (t1 - t0).as_secs_f64(), decode_seconds: (t2 - t1).as_secs_f64() };
    let record = compression_metrics(field, &reconstructed, &blob, timings)?;
    if record.max_abs_error > eb {
        return Err(CodecError::BoundViolation { max_error: record.max_abs_error, eb });
    }
    Ok(CodecRun { blob, reconstructed, record })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_and_aliases() {
        let opts = CodecOptions::new();
        assert_eq!(build_codec("predictor", &opts).unwrap().id(), "sz-like");
        assert_eq!(build_codec("transform", &opts).unwrap().id(), "zfp-like");
        assert_eq!(build_codec("multilevel", &opts).unwrap().id(), "mgard-like");
        assert!(matches!(build_codec("lz4", &opts), Err(CodecError::UnknownCodec(_))));
        assert!(build_codec("external", &opts).is_err());
        let bad: CodecOptions = [("level".to_string(), "9".to_string())].into();
        assert!(matches!(build_codec("sz-like", &bad), Err(CodecError::InvalidRequest(_))));
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let f = Field2D::constant(4, 4, 1.0).unwrap();
        for eb in [0.0, -1e-3, f64::NAN, f64::INFINITY] {
            let req = CodecRequest {
                field: &f,
                abs_error_bound: eb,
                codec_id: "sz-like".into(),
                codec_options: CodecOptions::new(),
            };
            assert!(matches!(compress(&req), Err(CodecError::InvalidRequest(_))));
        }
    }

    #[test]
    fn header_mismatches() {
        let f = Field2D::constant(8, 8, 2.0).unwrap();
        let req = CodecRequest {
            field: &f,
            abs_error_bound: 1e-3,
            codec_id: "zfp-like".into(),
            codec_options: CodecOptions::new(),
        };
        let blob = compress(&req).unwrap();
        assert_eq!((blob.nx, blob.ny), (8, 8));
        let back = CompressedBlob::from_bytes(&blob.to_bytes()).unwrap();
        assert_eq!(decompress(&back).unwrap().values(), f.values());

        let mut wrong_version = blob.clone();
        wrong_version.version += 1;
        assert!(matches!(decompress(&wrong_version), Err(CodecError::Version { .. })));

        let sz = build_codec("sz-like", &CodecOptions::new()).unwrap();
        assert!(matches!(sz.decompress(&blob), Err(CodecError::CodecMismatch { .. })));
    }
}
