//! Canonical Huffman coding of byte streams.
//!
//! Codes are assigned in order of (length, symbol), so the table is just the
//! code length of each symbol present. Bits are packed most significant first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{CodecError, Error, Result};

/// Longest permitted code.
pub const MAX_CODE_LEN: u8 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    /// `(symbol, code length)` for every symbol present, sorted by symbol.
    pub lengths: Vec<(u8, u8)>,
}

/// A bit string packed into bytes, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub bits: usize,
}

impl Bitstream {
    #[inline]
    fn push(&mut self, code: u32, len: u8) {
        for i in (0..len).rev() {
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            if (code >> i) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }
}

fn corrupt(detail: impl Into<String>) -> CodecError {
    CodecError::Corrupt { section: "huffman", detail: detail.into() }
}

/// Code lengths of an optimal prefix code for the nonzero `counts`.
fn huffman_lengths(counts: &[u64; 256]) -> [u8; 256] {
    let mut counts = *counts;
    loop {
        let mut len = [0u8; 256];
        let present: Vec<usize> = (0..256).filter(|&s| counts[s] > 0).collect();
        if present.len() == 1 {
            len[present[0]] = 1;
            return len;
        }
        // Nodes 0..256 are leaves; internal nodes follow. Ties break on the
        // node id so the result is deterministic.
        let mut parent = vec![usize::MAX; 512];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = present.iter().map(|&s| Reverse((counts[s], s))).collect();
        let mut next = 256;
        while heap.len() > 1 {
            let Reverse((ca, a)) = heap.pop().unwrap();
            let Reverse((cb, b)) = heap.pop().unwrap();
            parent[a] = next;
            parent[b] = next;
            heap.push(Reverse((ca + cb, next)));
            next += 1;
        }
        let mut max = 0;
        for &s in &present {
            let (mut d, mut n) = (0u32, s);
            while parent[n] != usize::MAX {
                n = parent[n];
                d += 1;
            }
            len[s] = d.min(255) as u8;
            max = max.max(d);
        }
        if max <= MAX_CODE_LEN as u32 {
            return len;
        }
        for c in counts.iter_mut().filter(|c| **c > 0) {
            *c = c.div_ceil(2);
        }
    }
}

impl HuffmanTable {
    /// Canonical codes as `(symbol, code, length)` in code order.
    fn codes(&self) -> Vec<(u8, u32, u8)> {
        let mut order = self.lengths.clone();
        order.sort_by_key(|&(s, l)| (l, s));
        let mut out = Vec::with_capacity(order.len());
        let (mut code, mut prev) = (0u64, 0u8);
        for (s, l) in order {
            code <<= l - prev;
            out.push((s, code as u32, l));
            code += 1;
            prev = l;
        }
        out
    }

    /// Checks that the lengths describe a usable prefix code: unique
    /// symbols, lengths in `1..=32`, and a complete code when more than one
    /// symbol is present.
    pub fn validate(&self) -> std::result::Result<(), CodecError> {
        if self.lengths.is_empty() {
            return Err(corrupt("empty code table"));
        }
        if self.lengths.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(corrupt("table symbols not strictly increasing"));
        }
        if self.lengths.iter().any(|&(_, l)| l == 0 || l > MAX_CODE_LEN) {
            return Err(corrupt("code length out of range"));
        }
        if self.lengths.len() == 1 {
            return if self.lengths[0].1 == 1 { Ok(()) } else { Err(corrupt("single symbol must use a 1-bit code")) };
        }
        let kraft: u64 = self.lengths.iter().map(|&(_, l)| 1u64 << (MAX_CODE_LEN - l)).sum();
        if kraft != 1u64 << MAX_CODE_LEN {
            return Err(corrupt("code lengths violate the Kraft equality"));
        }
        Ok(())
    }

    /// Expected code length in bits per symbol under `counts`.
    pub fn mean_length(&self, counts: &[u64; 256]) -> f64 {
        let total: u64 = counts.iter().sum();
        let bits: u64 = self.lengths.iter().map(|&(s, l)| counts[s as usize] * l as u64).sum();
        bits as f64 / total.max(1) as f64
    }
}

pub fn symbol_counts(data: &[u8]) -> [u64; 256] {
    let mut counts = [0u64; 256];
    for &b in data {
        counts[b as usize] += 1;
    }
    counts
}

pub fn huffman_encode(data: &[u8]) -> Result<(HuffmanTable, Bitstream)> {
    if data.is_empty() {
        return Err(Error::Empty("huffman input".into()));
    }
    let len = huffman_lengths(&symbol_counts(data));
    let table = HuffmanTable { lengths: (0..=255u8).filter(|&s| len[s as usize] > 0).map(|s| (s, len[s as usize])).collect() };
    let mut lut = [(0u32, 0u8); 256];
    for (s, c, l) in table.codes() {
        lut[s as usize] = (c, l);
    }
    let mut bits = Bitstream::default();
    for &b in data {
        let (c, l) = lut[b as usize];
        bits.push(c, l);
    }
    Ok((table, bits))
}

/// Decodes exactly `n` symbols.
pub fn huffman_decode(table: &HuffmanTable, bits: &Bitstream, n: usize) -> std::result::Result<Vec<u8>, CodecError> {
    table.validate()?;
    if bits.bits > bits.bytes.len() * 8 {
        return Err(corrupt("bit count exceeds the byte buffer"));
    }
    let codes = table.codes();
    let max = codes.last().map_or(0, |c| c.2) as usize;
    // first[l]: first canonical code of length l; offset[l]: its index.
    let mut first = vec![0u64; max + 2];
    let mut count = vec![0u64; max + 2];
    let mut offset = vec![0usize; max + 2];
    for (i, &(_, c, l)) in codes.iter().enumerate() {
        let l = l as usize;
        if count[l] == 0 {
            first[l] = c as u64;
            offset[l] = i;
        }
        count[l] += 1;
    }
    let mut out = Vec::with_capacity(n);
    let mut pos = 0;
    while out.len() < n {
        let (mut code, mut l) = (0u64, 0usize);
        loop {
            if pos >= bits.bits {
                return Err(corrupt(format!("bits exhausted after {} of {n} symbols", out.len())));
            }
            code = (code << 1) | bits.get(pos) as u64;
            pos += 1;
            l += 1;
            if l > max {
                return Err(corrupt("invalid prefix"));
            }
            if count[l] > 0 && code >= first[l] && code - first[l] < count[l] {
                out.push(codes[offset[l] + (code - first[l]) as usize].0);
                break;
            }
        }
    }
    Ok(out)
}
