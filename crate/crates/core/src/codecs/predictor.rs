//! Prediction-based codec in the style of SZ.
//!
//! The field is scanned in 16x16 blocks in raster order. Each block is
//! predicted either by the Lorenzo predictor over already reconstructed
//! values or by a least-squares plane through the block's original values,
//! whichever has the smaller sum of absolute prediction errors. Residuals are
//! quantized with bin width `2 * eb`; codes beyond 16-bit capacity, or whose
//! reconstruction would miss the bound after rounding, escape to an exactly
//! stored value.
//!
//! Body layout before the lossless stage:
//!
//! ```text
//! u8 x n_blocks          predictor per block (0 = Lorenzo, 1 = plane)
//! f64 x 3 x n_plane      plane coefficients (b0, b_row, b_col)
//! huffman section        one symbol per grid point, block order
//! u64 n_escapes, f64 x n_escapes
//! ```

use super::bits::ByteReader;
use super::huffman;
use super::lossless::{self, LosslessStage};
use super::{Codec, CodecError};
use crate::fields::Field2D;

pub const BLOCK: usize = 16;
const CAPACITY: i64 = i16::MAX as i64;
const ESCAPE: u32 = 0;
const ZERO_SYMBOL: u32 = 1 << 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PredictorMode {
    #[default]
    Auto,
    Lorenzo,
    Plane,
}

impl PredictorMode {
    pub fn parse(s: &str) -> Result<Self, CodecError> {
        match s {
            "auto" => Ok(PredictorMode::Auto),
            "lorenzo" => Ok(PredictorMode::Lorenzo),
            "plane" | "regression" => Ok(PredictorMode::Plane),
            other => Err(CodecError::InvalidRequest(format!("unknown predictor {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PredictorCodec {
    pub lossless: LosslessStage,
    pub mode: PredictorMode,
}

#[derive(Clone, Copy)]
struct Block {
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
}

fn blocks(nx: usize, ny: usize) -> impl Iterator<Item = Block> {
    (0..ny).step_by(BLOCK).flat_map(move |row0| {
        (0..nx).step_by(BLOCK).map(move |col0| Block {
            row0,
            col0,
            rows: BLOCK.min(ny - row0),
            cols: BLOCK.min(nx - col0),
        })
    })
}

#[inline]
fn lorenzo(recon: &[f64], nx: usize, row: usize, col: usize) -> f64 {
    let at = |r: usize, c: usize| recon[r * nx + c];
    let n = if row > 0 { at(row - 1, col) } else { 0.0 };
    let w = if col > 0 { at(row, col - 1) } else { 0.0 };
    let nw = if row > 0 && col > 0 { at(row - 1, col - 1) } else { 0.0 };
    n + w - nw
}

#[inline]
fn plane(coef: &[f64; 3], i: usize, j: usize) -> f64 {
    coef[0] + coef[1] * i as f64 + coef[2] * j as f64
}

/// Least-squares plane over a full rectangular block in local coordinates.
/// Row and column regressors are orthogonal once centered, so the slopes
/// decouple.
fn fit_plane(field: &Field2D, b: Block) -> [f64; 3] {
    let n = (b.rows * b.cols) as f64;
    let ci = (b.rows as f64 - 1.0) / 2.0;
    let cj = (b.cols as f64 - 1.0) / 2.0;
    let mut mean = 0.0;
    for i in 0..b.rows {
        for j in 0..b.cols {
            mean += field.get(b.row0 + i, b.col0 + j);
        }
    }
    mean /= n;
    let (mut siz, mut sjz, mut sii, mut sjj) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..b.rows {
        let di = i as f64 - ci;
        for j in 0..b.cols {
            let dj = j as f64 - cj;
            let z = field.get(b.row0 + i, b.col0 + j) - mean;
            siz += di * z;
            sjz += dj * z;
            sii += di * di;
            sjj += dj * dj;
        }
    }
    let bi = if sii > 0.0 { siz / sii } else { 0.0 };
    let bj = if sjj > 0.0 { sjz / sjj } else { 0.0 };
    [mean - bi * ci - bj * cj, bi, bj]
}

/// Quantizes one residual. Returns the symbol and the reconstructed value;
/// escapes reconstruct the original exactly.
#[inline]
fn quantize(orig: f64, pred: f64, eb: f64) -> (u32, f64) {
    let two_eb = 2.0 * eb;
    let q = ((orig - pred) / two_eb).round();
    if q.is_finite() && q.abs() <= CAPACITY as f64 {
        let r = pred + q * two_eb;
        if (orig - r).abs() <= eb {
            return ((q as i64 + ZERO_SYMBOL as i64) as u32, r);
        }
    }
    (ESCAPE, orig)
}

#[inline]
fn dequantize(symbol: u32, pred: f64, eb: f64) -> f64 {
    pred + (symbol as i64 - ZERO_SYMBOL as i64) as f64 * (2.0 * eb)
}

impl PredictorCodec {
    /// Runs the Lorenzo pass over a block, writing reconstructions into
    /// `recon` and returning the sum of absolute prediction errors.
    fn lorenzo_block(
        field: &Field2D,
        b: Block,
        eb: f64,
        recon: &mut [f64],
        symbols: &mut Vec<u32>,
        escapes: &mut Vec<f64>,
    ) -> f64 {
        let nx = field.nx();
        let mut sae = 0.0;
        for row in b.row0..b.row0 + b.rows {
            for col in b.col0..b.col0 + b.cols {
                let orig = field.get(row, col);
                let pred = lorenzo(recon, nx, row, col);
                sae += (orig - pred).abs();
                let (sym, r) = quantize(orig, pred, eb);
                if sym == ESCAPE {
                    escapes.push(orig);
                }
                symbols.push(sym);
                recon[row * nx + col] = r;
            }
        }
        sae
    }
}

impl Codec for PredictorCodec {
    fn id(&self) -> &str {
        "sz-like"
    }

    fn version(&self) -> u8 {
        1
    }

    fn encode(&self, field: &Field2D, eb: f64) -> Result<Vec<u8>, CodecError> {
        let (nx, ny) = (field.nx(), field.ny());
        let mut recon = vec![0.0; nx * ny];
        let mut selection = Vec::new();
        let mut coefs: Vec<[f64; 3]> = Vec::new();
        let mut symbols = Vec::with_capacity(nx * ny);
        let mut escapes = Vec::new();
        let mut trial_syms = Vec::with_capacity(BLOCK * BLOCK);
        let mut trial_esc = Vec::new();

        for b in blocks(nx, ny) {
            let use_plane = match self.mode {
                PredictorMode::Lorenzo => false,
                PredictorMode::Plane => true,
                PredictorMode::Auto => {
                    let coef = fit_plane(field, b);
                    let mut sae_plane = 0.0;
                    for i in 0..b.rows {
                        for j in 0..b.cols {
                            sae_plane += (field.get(b.row0 + i, b.col0 + j) - plane(&coef, i, j)).abs();
                        }
                    }
                    trial_syms.clear();
                    trial_esc.clear();
                    let sae_lorenzo = Self::lorenzo_block(field, b, eb, &mut recon, &mut trial_syms, &mut trial_esc);
                    if sae_lorenzo < sae_plane {
                        selection.push(0u8);
                        symbols.extend_from_slice(&trial_syms);
                        escapes.extend_from_slice(&trial_esc);
                        continue;
                    }
                    true
                }
            };
            if use_plane {
                let coef = fit_plane(field, b);
                selection.push(1);
                coefs.push(coef);
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        let (row, col) = (b.row0 + i, b.col0 + j);
                        let orig = field.get(row, col);
                        let (sym, r) = quantize(orig, plane(&coef, i, j), eb);
                        if sym == ESCAPE {
                            escapes.push(orig);
                        }
                        symbols.push(sym);
                        recon[row * nx + col] = r;
                    }
                }
            } else {
                selection.push(0);
                Self::lorenzo_block(field, b, eb, &mut recon, &mut symbols, &mut escapes);
            }
        }

        let mut body = selection;
        for c in &coefs {
            for v in c {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        huffman::encode(&symbols, &mut body);
        body.extend_from_slice(&(escapes.len() as u64).to_le_bytes());
        for v in &escapes {
            body.extend_from_slice(&v.to_le_bytes());
        }
        Ok(lossless::pack(self.lossless, &body))
    }

    fn decode(&self, nx: usize, ny: usize, eb: f64, payload: &[u8]) -> Result<Vec<f64>, CodecError> {
        let body = lossless::unpack(payload)?;
        let mut r = ByteReader::new(&body);
        let n_blocks = nx.div_ceil(BLOCK) * ny.div_ceil(BLOCK);
        let selection = r.take(n_blocks)?.to_vec();
        if selection.iter().any(|&s| s > 1) {
            return Err(CodecError::Corrupt("bad predictor selector".into()));
        }
        let n_plane = selection.iter().filter(|&&s| s == 1).count();
        let mut coefs = Vec::with_capacity(n_plane);
        for _ in 0..n_plane {
            coefs.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        let symbols = huffman::decode(&mut r)?;
        if symbols.len() != nx * ny {
            return Err(CodecError::Corrupt(format!("expected {} symbols, found {}", nx * ny, symbols.len())));
        }
        let n_esc = r.count(8)?;
        let mut escapes = Vec::with_capacity(n_esc);
        for _ in 0..n_esc {
            escapes.push(r.f64()?);
        }
        r.expect_end()?;

        let mut recon = vec![0.0; nx * ny];
        let mut syms = symbols.into_iter();
        let mut esc = escapes.into_iter();
        let mut coef_iter = coefs.iter();
        for (b, &sel) in blocks(nx, ny).zip(&selection) {
            let coef = if sel == 1 { coef_iter.next() } else { None };
            for i in 0..b.rows {
                for j in 0..b.cols {
                    let (row, col) = (b.row0 + i, b.col0 + j);
                    let pred = match coef {
                        Some(c) => plane(c, i, j),
                        None => lorenzo(&recon, nx, row, col),
                    };
                    let sym = syms.next().unwrap();
                    recon[row * nx + col] = if sym == ESCAPE {
                        esc.next().ok_or_else(|| CodecError::Corrupt("escape list exhausted".into()))?
                    } else {
                        dequantize(sym, pred, eb)
                    };
                }
            }
        }
        if esc.next().is_some() {
            return Err(CodecError::Corrupt("unused escape values".into()));
        }
        Ok(recon)
    }
}
