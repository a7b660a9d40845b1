//! Block-transform codec in the style of ZFP.
//!
//! The field is padded by edge replication to multiples of 4 and cut into
//! 4x4 blocks. Each block is brought to block floating point (a common
//! exponent, 50 fractional bits), transformed with the separable orthonormal
//! 4-point DCT-II, and its 16 integer coefficients are sent as sign-magnitude
//! bit planes, most significant plane first, in order of total frequency.
//! The encoder keeps the fewest planes whose local decode meets the bound.
//!
//! Block records, byte aligned, in raster order:
//!
//! ```text
//! 0                                         every value within eb of zero
//! 1 | i16 emax | u8 top_plane | u8 planes | embedded bit planes
//! 2 | 16 x f64                              stored verbatim
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use super::bits::{BitReader, BitWriter, ByteReader};
use super::{Codec, CodecError};
use crate::fields::Field2D;

const FRACTION_BITS: i32 = 50;
const TAG_ZERO: u8 = 0;
const TAG_CODED: u8 = 1;
const TAG_RAW: u8 = 2;

/// Coefficient order by total frequency `i + j`, then row frequency.
const ORDER: [usize; 16] = [0, 1, 4, 5, 2, 8, 6, 9, 3, 12, 10, 7, 13, 11, 14, 15];

#[derive(Clone, Copy, Debug, Default)]
pub struct TransformCodec;

fn dct_matrix() -> &'static [[f64; 4]; 4] {
    static M: OnceLock<[[f64; 4]; 4]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 4]; 4];
        for (k, row) in m.iter_mut().enumerate() {
            let s = if k == 0 { 0.5 } else { FRAC_1_SQRT_2 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = s * (PI * (2 * n + 1) as f64 * k as f64 / 8.0).cos();
            }
        }
        m
    })
}

/// `T X T^T` for a row-major 4x4 block.
fn forward(x: &[f64; 16]) -> [f64; 16] {
    let t = dct_matrix();
    let mut tmp = [0.0; 16];
    for k in 0..4 {
        for c in 0..4 {
            tmp[k * 4 + c] = (0..4).map(|n| t[k][n] * x[n * 4 + c]).sum();
        }
    }
    let mut out = [0.0; 16];
    for r in 0..4 {
        for k in 0..4 {
            out[r * 4 + k] = (0..4).map(|n| tmp[r * 4 + n] * t[k][n]).sum();
        }
    }
    out
}

/// `T^T C T`.
fn inverse(c: &[f64; 16]) -> [f64; 16] {
    let t = dct_matrix();
    let mut tmp = [0.0; 16];
    for n in 0..4 {
        for col in 0..4 {
            tmp[n * 4 + col] = (0..4).map(|k| t[k][n] * c[k * 4 + col]).sum();
        }
    }
    let mut out = [0.0; 16];
    for r in 0..4 {
        for n in 0..4 {
            out[r * 4 + n] = (0..4).map(|k| tmp[r * 4 + k] * t[k][n]).sum();
        }
    }
    out
}

/// Exponent `e` with `|x| = m * 2^e`, `m` in `[0.5, 1)`, for normal `x`.
fn frexp_exponent(x: f64) -> i32 {
    ((x.to_bits() >> 52) & 0x7ff) as i32 - 1022
}

/// Reconstructs block values from signed integer coefficients.
fn reconstruct(coefs: &[i64; 16], emax: i32) -> [f64; 16] {
    let c: [f64; 16] = std::array::from_fn(|i| coefs[i] as f64);
    let scale = 2f64.powi(emax - FRACTION_BITS);
    inverse(&c).map(|v| v * scale)
}

fn truncate(coefs: &[i64; 16], top: u32, planes: u32) -> [i64; 16] {
    let low = top + 1 - planes;
    let mask = !((1i64 << low) - 1);
    coefs.map(|c| c.signum() * (c.abs() & mask))
}

fn within(block: &[f64; 16], approx: &[f64; 16], eb: f64) -> bool {
    block.iter().zip(approx).all(|(a, b)| (a - b).abs() <= eb)
}

fn write_planes(w: &mut BitWriter, coefs: &[i64; 16], top: u32, planes: u32) {
    let mags: [u64; 16] = coefs.map(|c| c.unsigned_abs());
    let mut significant = [false; 16];
    for plane in (top + 1 - planes..=top).rev() {
        let before = significant;
        for &i in &ORDER {
            if before[i] {
                w.write_bit((mags[i] >> plane) & 1 == 1);
            }
        }
        let mut pos = 0;
        loop {
            let rest = || ORDER[pos..].iter().filter(|&&i| !before[i]);
            if rest().next().is_none() {
                break;
            }
            let any = rest().any(|&i| (mags[i] >> plane) & 1 == 1);
            w.write_bit(any);
            if !any {
                break;
            }
            while pos < 16 {
                let i = ORDER[pos];
                pos += 1;
                if before[i] {
                    continue;
                }
                let bit = (mags[i] >> plane) & 1 == 1;
                w.write_bit(bit);
                if bit {
                    w.write_bit(coefs[i] < 0);
                    significant[i] = true;
                    break;
                }
            }
        }
    }
}

fn read_planes(r: &mut BitReader<'_>, top: u32, planes: u32) -> Result<[i64; 16], CodecError> {
    let mut mags = [0u64; 16];
    let mut negative = [false; 16];
    let mut significant = [false; 16];
    for plane in (top + 1 - planes..=top).rev() {
        let before = significant;
        for &i in &ORDER {
            if before[i] && r.read_bit()? {
                mags[i] |= 1 << plane;
            }
        }
        let mut pos = 0;
        loop {
            if !ORDER[pos..].iter().any(|&i| !before[i]) {
                break;
            }
            if !r.read_bit()? {
                break;
            }
            let mut found = false;
            while pos < 16 {
                let i = ORDER[pos];
                pos += 1;
                if before[i] {
                    continue;
                }
                if r.read_bit()? {
                    negative[i] = r.read_bit()?;
                    mags[i] |= 1 << plane;
                    significant[i] = true;
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(CodecError::Corrupt("group test without a significant coefficient".into()));
            }
        }
    }
    Ok(std::array::from_fn(|i| {
        let m = mags[i] as i64;
        if negative[i] {
            -m
        } else {
            m
        }
    }))
}

/// Encodes one block, appending its record to `out`.
fn encode_block(block: &[f64; 16], eb: f64, out: &mut Vec<u8>) {
    let maxabs = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if maxabs <= eb {
        out.push(TAG_ZERO);
        return;
    }
    if let Some((emax, top, planes, coefs)) = plan_block(block, maxabs, eb) {
        out.push(TAG_CODED);
        out.extend_from_slice(&(emax as i16).to_le_bytes());
        out.push(top as u8);
        out.push(planes as u8);
        let mut w = BitWriter::new();
        write_planes(&mut w, &coefs, top, planes);
        out.extend_from_slice(&w.finish());
    } else {
        out.push(TAG_RAW);
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Finds the fewest planes meeting the bound; `None` when no plane count
/// does or the block cannot be represented in fixed point.
fn plan_block(block: &[f64; 16], maxabs: f64, eb: f64) -> Option<(i32, u32, u32, [i64; 16])> {
    if maxabs < f64::MIN_POSITIVE {
        return None;
    }
    let emax = frexp_exponent(maxabs);
    let to_fixed = 2f64.powi(FRACTION_BITS - emax);
    let from_fixed = 2f64.powi(emax - FRACTION_BITS);
    if !to_fixed.is_finite() || from_fixed == 0.0 || emax.unsigned_abs() > i16::MAX as u32 {
        return None;
    }
    let fixed: [f64; 16] = block.map(|v| (v * to_fixed).round());
    let coefs: [i64; 16] = forward(&fixed).map(|c| c.round() as i64);
    let top = coefs.iter().map(|c| c.unsigned_abs()).max()?;
    if top == 0 {
        return None;
    }
    let top = 63 - top.leading_zeros();
    (1..=top + 1).find_map(|planes| {
        let kept = truncate(&coefs, top, planes);
        within(block, &reconstruct(&kept, emax), eb).then_some((emax, top, planes, kept))
    })
}

fn padded(n: usize) -> usize {
    n.div_ceil(4) * 4
}

fn gather(field: &Field2D, row0: usize, col0: usize) -> [f64; 16] {
    let (nx, ny) = (field.nx(), field.ny());
    std::array::from_fn(|k| {
        let (i, j) = (k / 4, k % 4);
        field.get((row0 + i).min(ny - 1), (col0 + j).min(nx - 1))
    })
}

impl Codec for TransformCodec {
    fn id(&self) -> &str {
        "zfp-like"
    }

    fn version(&self) -> u8 {
        1
    }

    fn encode(&self, field: &Field2D, eb: f64) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::new();
        for row0 in (0..padded(field.ny())).step_by(4) {
            for col0 in (0..padded(field.nx())).step_by(4) {
                encode_block(&gather(field, row0, col0), eb, &mut out);
            }
        }
        Ok(out)
    }

    fn decode(&self, nx: usize, ny: usize, _eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError> {
        let mut r = ByteReader::new(payload);
        let mut out = vec![0.0; nx * ny];
        for row0 in (0..padded(ny)).step_by(4) {
            for col0 in (0..padded(nx)).step_by(4) {
                let block: [f64; 16] = match r.u8()? {
                    TAG_ZERO => [0.0; 16],
                    TAG_CODED => {
                        let emax = r.i16()? as i32;
                        let top = r.u8()? as u32;
                        let planes = r.u8()? as u32;
                        if top > 62 || planes == 0 || planes > top + 1 {
                            return Err(CodecError::Corrupt("bad plane header".into()));
                        }
                        let rest = r.rest();
                        let mut bits = BitReader::new(rest);
                        let coefs = read_planes(&mut bits, top, planes)?;
                        let used = bits.bytes_consumed();
                        r = ByteReader::new(&rest[used..]);
                        reconstruct(&coefs, emax)
                    }
                    TAG_RAW => {
                        let mut b = [0.0; 16];
                        for v in &mut b {
                            *v = r.f64()?;
                        }
                        b
                    }
                    t => return Err(CodecError::Corrupt(format!("unknown block tag {t}"))),
                };
                for i in 0..4 {
                    for j in 0..4 {
                        let (row, col) = (row0 + i, col0 + j);
                        if row < ny && col < nx {
                            out[row * nx + col] = block[i * 4 + j];
                        }
                    }
                }
            }
        }
        r.expect_end()?;
        Ok(out)
    }
}
