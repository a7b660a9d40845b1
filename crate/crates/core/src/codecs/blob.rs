//! The `CSCX` container wrapped around every codec payload.
//!
//! ```text
//! "CSCX" | u8 version | u16 id_len | id (utf-8) | u32 nx | u32 ny | f64 eb | payload
//! ```
//!
//! All integers and reals are little endian; the payload runs to the end.

use super::bits::ByteReader;
use super::CodecError;

pub const MAGIC: &[u8; 4] = b"CSCX";

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedBlob {
    pub codec_id: String,
    /// Stream version of the codec that produced the payload.
    pub version: u8,
    pub nx: usize,
    pub ny: usize,
    pub eb: f64,
    pub payload: Vec<u8>,
}

impl CompressedBlob {
    pub fn header_len(&self) -> usize {
        4 + 1 + 2 + self.codec_id.len() + 4 + 4 + 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.extend_from_slice(&(self.codec_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.codec_id.as_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        out.extend_from_slice(&self.eb.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(CodecError::Corrupt("missing CSCX magic".into()));
        }
        let version = r.u8()?;
        let id_len = r.u16()? as usize;
        let codec_id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| CodecError::Corrupt("codec id is not utf-8".into()))?
            .to_owned();
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let eb = r.f64()?;
        let payload = r.rest().to_vec();
        Ok(Self { codec_id, version, nx, ny, eb, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let blob = CompressedBlob {
            codec_id: "sz-like".into(),
            version: 1,
            nx: 1028,
            ny: 7,
            eb: 1e-3,
            payload: vec![1, 2, 3],
        };
        let bytes = blob.to_bytes();
        assert_eq!(&bytes[..4], b"CSCX");
        assert_eq!(bytes.len(), blob.header_len() + 3);
        assert_eq!(CompressedBlob::from_bytes(&bytes).unwrap(), blob);
        assert!(CompressedBlob::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CompressedBlob::from_bytes(&bad).is_err());
    }
}
