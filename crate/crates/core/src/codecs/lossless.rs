//! General-purpose lossless stage applied to a codec body. The first byte of
//! the packed output names the stage.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::CodecError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LosslessStage {
    Identity,
    #[default]
    Deflate,
}

impl LosslessStage {
    fn tag(self) -> u8 {
        match self {
            LosslessStage::Identity => 0,
            LosslessStage::Deflate => 1,
        }
    }

    pub fn parse(name: &str) -> Result<Self, CodecError> {
        match name {
            "none" | "identity" => Ok(LosslessStage::Identity),
            "deflate" => Ok(LosslessStage::Deflate),
            other => {
                Err(CodecError::InvalidRequest(format!("unknown lossless stage {other:?} (expected deflate or none)")))
            }
        }
    }
}

pub fn pack(stage: LosslessStage, body: &[u8]) -> Vec<u8> {
    let mut out = vec![stage.tag()];
    match stage {
        LosslessStage::Identity => out.extend_from_slice(body),
        LosslessStage::Deflate => {
            let mut enc = DeflateEncoder::new(out, Compression::default());
            enc.write_all(body).expect("writing to a Vec cannot fail");
            out = enc.finish().expect("writing to a Vec cannot fail");
        }
    }
    out
}

pub fn unpack(packed: &[u8]) -> Result<Vec<u8>, CodecError> {
    let (&tag, body) = packed.split_first().ok_or_else(|| CodecError::Corrupt("empty payload".into()))?;
    match tag {
        0 => Ok(body.to_vec()),
        1 => {
            let mut out = Vec::new();
            DeflateDecoder::new(body)
                .read_to_end(&mut out)
                .map_err(|e| CodecError::Corrupt(format!("deflate stream: {e}")))?;
            Ok(out)
        }
        t => Err(CodecError::Corrupt(format!("unknown lossless stage tag {t}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deflate_shrinks_redundant_data() {
        let body = vec![0u8; 100_000];
        let packed = pack(LosslessStage::Deflate, &body);
        assert!(packed.len() < 1000);
        assert_eq!(unpack(&packed).unwrap(), body);
    }

    #[test]
    fn bad_tag_and_garbage() {
        assert!(unpack(&[]).is_err());
        assert!(unpack(&[9, 1, 2]).is_err());
        assert!(unpack(&[1, 0xff, 0xff, 0xff]).is_err());
    }

    proptest! {
        #[test]
        fn both_stages_round_trip(body in prop::collection::vec(any::<u8>(), 0..4096), deflate: bool) {
            let stage = if deflate { LosslessStage::Deflate } else { LosslessStage::Identity };
            prop_assert_eq!(unpack(&pack(stage, &body)).unwrap(), body);
        }
    }
}
