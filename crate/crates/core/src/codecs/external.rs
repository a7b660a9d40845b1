//! Adapter for compressors run as shell commands.
//!
//! Templates are expanded with `{input}`, `{output}`, `{eb}`, `{nx}` and
//! `{ny}` and run through `sh -c` in a scratch directory. The compressor reads
//! a headerless little-endian `f64` array and writes its compressed stream;
//! the decompressor reads that stream and writes the array back. The
//! compressed stream becomes the blob payload.

use std::fs;
use std::path::Path;
use std::process::Command;

use super::{Codec, CodecError};
use crate::fields::{decode_values, encode_values, ByteOrder, DType, Field2D};

const REQUIRED: [&str; 3] = ["{input}", "{output}", "{eb}"];

#[derive(Clone, Debug)]
pub struct ExternalCodec {
    id: String,
    compress_template: String,
    decompress_template: String,
}

fn quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

fn expand(template: &str, input: &Path, output: &Path, eb: f64, nx: usize, ny: usize) -> String {
    template
        .replace("{input}", &quote(input))
        .replace("{output}", &quote(output))
        .replace("{eb}", &format!("{eb:e}"))
        .replace("{nx}", &nx.to_string())
        .replace("{ny}", &ny.to_string())
}

fn failure(message: impl Into<String>, diagnostics: impl Into<String>) -> CodecError {
    CodecError::External { message: message.into(), diagnostics: diagnostics.into() }
}

fn run(command: &str, dir: &Path, output: &Path) -> Result<Vec<u8>, CodecError> {
    let out = Command::new("sh").arg("-c").arg(command).current_dir(dir).output()?;
    let diagnostics = format!(
        "command: {command}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout).trim_end(),
        String::from_utf8_lossy(&out.stderr).trim_end()
    );
    if !out.status.success() {
        return Err(failure(format!("command exited with {}", out.status), diagnostics));
    }
    fs::read(output).map_err(|e| failure(format!("missing output {}: {e}", output.display()), diagnostics))
}

impl ExternalCodec {
    /// `name` becomes part of the codec id, `external:<name>`.
    pub fn new(
        name: &str,
        compress_template: impl Into<String>,
        decompress_template: impl Into<String>,
    ) -> Result<Self, CodecError> {
        let compress_template = compress_template.into();
        let decompress_template = decompress_template.into();
        for (which, t) in [("compress", &compress_template), ("decompress", &decompress_template)] {
            for p in REQUIRED {
                if !t.contains(p) {
                    return Err(CodecError::InvalidRequest(format!("{which} template lacks {p}")));
                }
            }
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(CodecError::InvalidRequest(format!("bad external codec name {name:?}")));
        }
        Ok(ExternalCodec { id: format!("external:{name}"), compress_template, decompress_template })
    }

    fn restore(&self, dir: &Path, nx: usize, ny: usize, eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError> {
        let input = dir.join("compressed.bin");
        let output = dir.join("restored.f64");
        fs::write(&input, payload)?;
        let cmd = expand(&self.decompress_template, &input, &output, eb, nx, ny);
        let bytes = run(&cmd, dir, &output)?;
        if bytes.len() != nx * ny * 8 {
            return Err(failure(
                format!("decompressed output has {} bytes, expected {}", bytes.len(), nx * ny * 8),
                format!("command: {cmd}"),
            ));
        }
        decode_values(&bytes, DType::Float64, ByteOrder::Little)
            .map_err(|e| failure(format!("decompressed output unreadable: {e}"), format!("command: {cmd}")))
    }
}

impl Codec for ExternalCodec {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> u8 {
        1
    }

    /// Also decompresses and rejects output that misses the bound.
    fn encode(&self, field: &Field2D, eb: f64) -> Result<Vec<u8>, CodecError> {
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("field.f64");
        let output = dir.path().join("compressed.out");
        fs::write(&input, encode_values(field.values(), DType::Float64, ByteOrder::Little))?;
        let cmd = expand(&self.compress_template, &input, &output, eb, field.nx(), field.ny());
        let payload = run(&cmd, dir.path(), &output)?;

        let restored = self.restore(dir.path(), field.nx(), field.ny(), eb, &payload)?;
        let max_error = field.values().iter().zip(&restored).map(|(a, b)| (a - b).abs()).fold(0.0f64, |m, e| {
            if e.is_nan() {
                f64::NAN
            } else {
                m.max(e)
            }
        });
        if max_error.is_nan() || max_error > eb {
            return Err(failure(
                format!("error bound violated: max abs error {max_error:e} > eb {eb:e}"),
                format!("compress: {cmd}"),
            ));
        }
        Ok(payload)
    }

    fn decode(&self, nx: usize, ny: usize, eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError> {
        let dir = tempfile::tempdir()?;
        self.restore(dir.path(), nx, ny, eb, payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::run_codec;

    fn ramp() -> Field2D {
        Field2D::from_fn(8, 6, "ramp", |r, c| r as f64 - 0.5 * c as f64).unwrap()
    }

    #[test]
    fn copy_command_is_lossless_with_unit_ratio() {
        let codec = ExternalCodec::new("copy", "cp {input} {output} # {eb}", "cp {input} {output} # {eb}").unwrap();
        assert_eq!(codec.id(), "external:copy");
        let run = run_codec(&codec, &ramp(), 1e-3).unwrap();
        assert_eq!(run.record.compression_ratio, 1.0);
        assert_eq!(run.record.max_abs_error, 0.0);
        assert_eq!(run.record.codec_id, "external:copy");
    }

    #[test]
    fn violating_output_is_an_external_error() {
        let codec = ExternalCodec::new(
            "zeros",
            "cp {input} {output} # {eb}",
            "head -c $(( {nx} * {ny} * 8 )) /dev/zero > {output} # {input} {eb}",
        )
        .unwrap();
        let err = codec.compress(&ramp(), 1e-3).unwrap_err();
        assert!(matches!(err, CodecError::External { .. }), "{err}");
        assert!(err.to_string().contains("bound"));
    }

    #[test]
    fn failing_commands_carry_diagnostics() {
        let codec =
            ExternalCodec::new("fail", "echo oops >&2; exit 3 # {input} {output} {eb}", "cp {input} {output} {eb}")
                .unwrap();
        match codec.compress(&ramp(), 1e-3) {
            Err(CodecError::External { diagnostics, .. }) => assert!(diagnostics.contains("oops")),
            other => panic!("{other:?}"),
        }
        let silent = ExternalCodec::new("silent", "true {input} {output} {eb}", "cp {input} {output} {eb}").unwrap();
        assert!(matches!(silent.compress(&ramp(), 1e-3), Err(CodecError::External { .. })));
    }

    #[test]
    fn templates_need_placeholders() {
        assert!(ExternalCodec::new("x", "cp {input} {output}", "cp {input} {output} {eb}").is_err());
        assert!(ExternalCodec::new("x", "cp {input} {output} {eb}", "cp {output} {eb}").is_err());
        assert!(ExternalCodec::new("has space", "{input}{output}{eb}", "{input}{output}{eb}").is_err());
    }
}
