//! Multilevel codec in the style of MGARD, simplified to an orthonormal Haar
//! pyramid. Experimental.
//!
//! The field is padded by edge replication to power-of-two sides and
//! decomposed over `L = floor(log2(min(nx, ny)))` levels. All coefficients
//! are quantized uniformly with bin `delta`, starting at `2 * eb / (L + 1)`.
//! After a trial decode the bin is halved, at most 6 times, until the bound
//! holds; grid points that still miss it are stored exactly in a patch list.
//!
//! Body layout before the lossless stage:
//!
//! ```text
//! u8 flags (bit 0: experimental)
//! u8 levels
//! f64 delta
//! huffman section                  one symbol per coefficient
//! u64 n_escapes, f64 x n_escapes   coefficients stored verbatim
//! u64 n_patches, (u64 index, f64 value) x n_patches
//! ```

use std::f64::consts::FRAC_1_SQRT_2;

use super::bits::ByteReader;
use super::huffman;
use super::lossless::{self, LosslessStage};
use super::{Codec, CodecError};
use crate::fields::Field2D;

const MAX_HALVINGS: u32 = 6;
const ESCAPE: u32 = 0;
const MAX_ZIGZAG: u64 = u16::MAX as u64 - 1;
const FLAG_EXPERIMENTAL: u8 = 1;

#[derive(Clone, Debug, Default)]
pub struct MultilevelCodec {
    pub lossless: LosslessStage,
}

/// Number of decomposition levels for an `nx` by `ny` field.
pub fn levels(nx: usize, ny: usize) -> u32 {
    nx.min(ny).max(1).ilog2()
}

struct Grid {
    width: usize,
    height: usize,
}

impl Grid {
    fn for_field(nx: usize, ny: usize) -> Self {
        Grid { width: nx.next_power_of_two(), height: ny.next_power_of_two() }
    }

    fn pad(&self, field: &Field2D) -> Vec<f64> {
        let (nx, ny) = (field.nx(), field.ny());
        let mut out = Vec::with_capacity(self.width * self.height);
        for row in 0..self.height {
            let src = field.row(row.min(ny - 1));
            out.extend((0..self.width).map(|col| src[col.min(nx - 1)]));
        }
        out
    }
}

fn haar_forward(data: &mut [f64], stride: usize, n: usize, count: usize, step: usize, tmp: &mut Vec<f64>) {
    // transforms `count` lines of length `n`; line k starts at k * step
    let half = n / 2;
    for line in 0..count {
        let base = line * step;
        tmp.clear();
        tmp.resize(n, 0.0);
        for i in 0..half {
            let a = data[base + 2 * i * stride];
            let b = data[base + (2 * i + 1) * stride];
            tmp[i] = (a + b) * FRAC_1_SQRT_2;
            tmp[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        for (i, v) in tmp.iter().enumerate() {
            data[base + i * stride] = *v;
        }
    }
}

fn haar_inverse(data: &mut [f64], stride: usize, n: usize, count: usize, step: usize, tmp: &mut Vec<f64>) {
    let half = n / 2;
    for line in 0..count {
        let base = line * step;
        tmp.clear();
        tmp.resize(n, 0.0);
        for i in 0..half {
            let s = data[base + i * stride];
            let d = data[base + (half + i) * stride];
            tmp[2 * i] = (s + d) * FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
        }
        for (i, v) in tmp.iter().enumerate() {
            data[base + i * stride] = *v;
        }
    }
}

fn decompose(data: &mut [f64], grid: &Grid, levels: u32) {
    let mut tmp = Vec::new();
    let (mut w, mut h) = (grid.width, grid.height);
    for _ in 0..levels {
        haar_forward(data, 1, w, h, grid.width, &mut tmp);
        haar_forward(data, grid.width, h, w, 1, &mut tmp);
        w /= 2;
        h /= 2;
    }
}

fn recompose(data: &mut [f64], grid: &Grid, levels: u32) {
    let mut tmp = Vec::new();
    for level in (0..levels).rev() {
        let (w, h) = (grid.width >> level, grid.height >> level);
        haar_inverse(data, grid.width, h, w, 1, &mut tmp);
        haar_inverse(data, 1, w, h, grid.width, &mut tmp);
    }
}

fn zigzag(q: i64) -> u64 {
    ((q << 1) ^ (q >> 63)) as u64
}

fn unzigzag(z: u64) -> i64 {
    (z >> 1) as i64 ^ -((z & 1) as i64)
}

/// Quantized coefficients: symbols, verbatim escapes, and the dequantized
/// values the decoder will see.
fn quantize(coefs: &[f64], delta: f64) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
    let mut symbols = Vec::with_capacity(coefs.len());
    let mut escapes = Vec::new();
    let mut dequant = Vec::with_capacity(coefs.len());
    for &c in coefs {
        let q = (c / delta).round();
        if q.is_finite() && q.abs() < (MAX_ZIGZAG / 2) as f64 {
            let q = q as i64;
            symbols.push(zigzag(q) as u32 + 1);
            dequant.push(q as f64 * delta);
        } else {
            symbols.push(ESCAPE);
            escapes.push(c);
            dequant.push(c);
        }
    }
    (symbols, escapes, dequant)
}

fn crop(data: &[f64], grid: &Grid, nx: usize, ny: usize) -> Vec<f64> {
    (0..ny).flat_map(|row| data[row * grid.width..row * grid.width + nx].iter().copied()).collect()
}

impl Codec for MultilevelCodec {
    fn id(&self) -> &str {
        "mgard-like"
    }

    fn version(&self) -> u8 {
        1
    }

    fn encode(&self, field: &Field2D, eb: f64) -> Result<Vec<u8>, CodecError> {
        let (nx, ny) = (field.nx(), field.ny());
        let grid = Grid::for_field(nx, ny);
        let levels = levels(nx, ny);
        let mut coefs = grid.pad(field);
        decompose(&mut coefs, &grid, levels);

        let mut delta = 2.0 * eb / (levels + 1) as f64;
        let mut halvings = 0;
        let (symbols, escapes, patches) = loop {
            let (symbols, escapes, mut recon) = quantize(&coefs, delta);
            recompose(&mut recon, &grid, levels);
            let recon = crop(&recon, &grid, nx, ny);
            let misses: Vec<(u64, f64)> = field
                .values()
                .iter()
                .zip(&recon)
                .enumerate()
                .filter(|(_, (a, b))| (*a - *b).abs() > eb)
                .map(|(i, (a, _))| (i as u64, *a))
                .collect();
            if misses.is_empty() || halvings == MAX_HALVINGS {
                break (symbols, escapes, misses);
            }
            delta /= 2.0;
            halvings += 1;
        };

        let mut body = vec![FLAG_EXPERIMENTAL, levels as u8];
        body.extend_from_slice(&delta.to_le_bytes());
        huffman::encode(&symbols, &mut body);
        body.extend_from_slice(&(escapes.len() as u64).to_le_bytes());
        for e in &escapes {
            body.extend_from_slice(&e.to_le_bytes());
        }
        body.extend_from_slice(&(patches.len() as u64).to_le_bytes());
        for (i, v) in &patches {
            body.extend_from_slice(&i.to_le_bytes());
            body.extend_from_slice(&v.to_le_bytes());
        }
        Ok(lossless::pack(self.lossless, &body))
    }

    fn decode(&self, nx: usize, ny: usize, _eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError> {
        let body = lossless::unpack(payload)?;
        let mut r = ByteReader::new(&body);
        if r.u8()? & FLAG_EXPERIMENTAL == 0 {
            return Err(CodecError::Corrupt("missing experimental flag".into()));
        }
        let levels = r.u8()? as u32;
        if levels != self::levels(nx, ny) {
            return Err(CodecError::Corrupt(format!("level count {levels} does not match the grid")));
        }
        let delta = r.f64()?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(CodecError::Corrupt("bad quantization bin".into()));
        }
        let grid = Grid::for_field(nx, ny);
        let symbols = huffman::decode(&mut r)?;
        if symbols.len() != grid.width * grid.height {
            return Err(CodecError::Corrupt("coefficient count does not match the grid".into()));
        }
        let n_escapes = r.count(8)?;
        let mut escapes = (0..n_escapes).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?.into_iter();
        let mut coefs = Vec::with_capacity(symbols.len());
        for s in symbols {
            if s == ESCAPE {
                coefs.push(escapes.next().ok_or_else(|| CodecError::Corrupt("too few escapes".into()))?);
            } else {
                coefs.push(unzigzag(s as u64 - 1) as f64 * delta);
            }
        }
        if escapes.next().is_some() {
            return Err(CodecError::Corrupt("unused escapes".into()));
        }
        recompose(&mut coefs, &grid, levels);
        let mut out = crop(&coefs, &grid, nx, ny);
        for _ in 0..r.count(16)? {
            let i = r.u64()? as usize;
            let v = r.f64()?;
            *out.get_mut(i).ok_or_else(|| CodecError::Corrupt("patch index out of range".into()))? = v;
        }
        r.expect_end()?;
        Ok(out)
    }
}
