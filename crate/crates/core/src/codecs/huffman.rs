//! Canonical Huffman coding of `u32` symbol streams.
//!
//! Section layout (little endian):
//!
//! ```text
//! u64 symbol_count
//! u32 alphabet_size
//! alphabet_size x (varint symbol_delta, u8 code_length)
//! u64 bitstream_bytes
//! bitstream                                      // MSB-first
//! ```
//!
//! Symbols are listed in increasing order; each delta is taken from the
//! previous symbol (the first from zero) and written as an LEB128 varint.
//! A single-symbol alphabet is coded with zero bits per symbol.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::bits::{BitReader, BitWriter, ByteReader};
use super::CodecError;

/// Longest code emitted; deeper trees are flattened by halving counts.
pub const MAX_CODE_LEN: u8 = 24;

fn code_lengths(freqs: &[(u32, u64)]) -> Vec<u8> {
    if freqs.len() == 1 {
        return vec![0];
    }
    let mut weights: Vec<u64> = freqs.iter().map(|&(_, f)| f).collect();
    loop {
        let lens = tree_depths(&weights);
        if lens.iter().all(|&l| l <= MAX_CODE_LEN) {
            return lens;
        }
        for w in &mut weights {
            *w = (*w).div_ceil(2);
        }
    }
}

/// Leaf depths of a Huffman tree. Ties break on node index so the result is
/// deterministic.
fn tree_depths(weights: &[u64]) -> Vec<u8> {
    let n = weights.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        weights.iter().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((w1, a)) = heap.pop().unwrap();
        let Reverse((w2, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((w1 + w2, next)));
        next += 1;
    }
    (0..n)
        .map(|leaf| {
            let mut depth = 0u8;
            let mut node = leaf;
            while parent[node] != usize::MAX {
                node = parent[node];
                depth += 1;
            }
            depth
        })
        .collect()
}

/// Canonical codes for `(symbol, length)` pairs: ordered by length, then
/// symbol.
fn canonical_codes(table: &[(u32, u8)]) -> Vec<(u32, u8, u32)> {
    let mut order: Vec<(u32, u8)> = table.to_vec();
    order.sort_by_key(|&(s, l)| (l, s));
    let mut out = Vec::with_capacity(order.len());
    let mut code = 0u32;
    let mut prev_len = order.first().map(|&(_, l)| l).unwrap_or(0);
    for (i, &(sym, len)) in order.iter().enumerate() {
        if i > 0 {
            code = (code + 1) << (len - prev_len);
        }
        prev_len = len;
        out.push((sym, len, code));
    }
    out
}

fn write_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn read_varint(r: &mut ByteReader<'_>) -> Result<u32, CodecError> {
    let mut v = 0u64;
    for shift in (0..35).step_by(7) {
        let b = r.u8()?;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return u32::try_from(v).map_err(|_| CodecError::Corrupt("varint overflow".into()));
        }
    }
    Err(CodecError::Corrupt("varint too long".into()))
}

pub fn encode(symbols: &[u32], out: &mut Vec<u8>) {
    let mut counts = BTreeMap::<u32, u64>::new();
    for &s in symbols {
        *counts.entry(s).or_default() += 1;
    }
    let freqs: Vec<(u32, u64)> = counts.into_iter().collect();

    out.extend_from_slice(&(symbols.len() as u64).to_le_bytes());
    out.extend_from_slice(&(freqs.len() as u32).to_le_bytes());
    if freqs.is_empty() {
        out.extend_from_slice(&0u64.to_le_bytes());
        return;
    }
    let lens = code_lengths(&freqs);
    let table: Vec<(u32, u8)> = freqs.iter().zip(&lens).map(|(&(s, _), &l)| (s, l)).collect();
    let mut prev = 0u32;
    for &(s, l) in &table {
        write_varint(out, s - prev);
        out.push(l);
        prev = s;
    }

    let bits = if freqs.len() == 1 {
        Vec::new()
    } else {
        let codes: BTreeMap<u32, (u8, u32)> =
            canonical_codes(&table).into_iter().map(|(s, l, c)| (s, (l, c))).collect();
        let mut w = BitWriter::new();
        for s in symbols {
            let (len, code) = codes[s];
            w.write(code as u64, len as u32);
        }
        w.finish()
    };
    out.extend_from_slice(&(bits.len() as u64).to_le_bytes());
    out.extend_from_slice(&bits);
}

pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Vec<u32>, CodecError> {
    let count = r.u64()? as usize;
    let alphabet = r.u32()? as usize;
    if alphabet > r.remaining() / 2 {
        return Err(CodecError::Corrupt("huffman table larger than payload".into()));
    }
    let mut table = Vec::with_capacity(alphabet);
    let mut prev = 0u32;
    for i in 0..alphabet {
        let delta = read_varint(r)?;
        if i > 0 && delta == 0 {
            return Err(CodecError::Corrupt("huffman symbols not increasing".into()));
        }
        let s = prev.checked_add(delta).ok_or_else(|| CodecError::Corrupt("huffman symbol overflow".into()))?;
        table.push((s, r.u8()?));
        prev = s;
    }
    let nbytes = r.count(1)?;
    let bits = r.take(nbytes)?;

    match alphabet {
        0 if count == 0 => return Ok(Vec::new()),
        0 => return Err(CodecError::Corrupt("symbols without an alphabet".into())),
        1 => {
            if table[0].1 != 0 {
                return Err(CodecError::Corrupt("bad single-symbol code length".into()));
            }
            return Ok(vec![table[0].0; count]);
        }
        _ => {}
    }
    if table.iter().any(|&(_, l)| l == 0 || l > MAX_CODE_LEN) {
        return Err(CodecError::Corrupt("huffman code length out of range".into()));
    }
    // Kraft sum must not exceed 1
    let kraft: u64 = table.iter().map(|&(_, l)| 1u64 << (MAX_CODE_LEN - l)).sum();
    if kraft > 1u64 << MAX_CODE_LEN {
        return Err(CodecError::Corrupt("huffman code lengths oversubscribed".into()));
    }
    if count > nbytes.saturating_mul(8) {
        return Err(CodecError::Corrupt("symbol count exceeds bitstream".into()));
    }

    let canon = canonical_codes(&table);
    let max_len = MAX_CODE_LEN as usize;
    let mut first = vec![0u32; max_len + 2];
    let mut num = vec![0u32; max_len + 2];
    let mut offset = vec![0usize; max_len + 2];
    for (i, &(_, l, c)) in canon.iter().enumerate() {
        let l = l as usize;
        if num[l] == 0 {
            first[l] = c;
            offset[l] = i;
        }
        num[l] += 1;
    }

    let mut reader = BitReader::new(bits);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut code = 0u32;
        let mut len = 0usize;
        loop {
            code = (code << 1) | reader.read_bit()? as u32;
            len += 1;
            if num[len] > 0 && code >= first[len] && code - first[len] < num[len] {
                out.push(canon[offset[len] + (code - first[len]) as usize].0);
                break;
            }
            if len == max_len {
                return Err(CodecError::Corrupt("invalid huffman code".into()));
            }
        }
    }
    Ok(out)
}

/// Decodes a buffer holding exactly one section.
pub fn decode_section(bytes: &[u8]) -> Result<Vec<u32>, CodecError> {
    let mut r = ByteReader::new(bytes);
    let out = decode(&mut r)?;
    r.expect_end()?;
    Ok(out)
}
