//! Byte-level run-length coding.

use crate::error::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RleRun {
    pub value: u8,
    /// At least 1.
    pub count: u32,
}

/// Maximal runs of `bytes`. A run longer than `u32::MAX` is split.
pub fn rle_encode(bytes: &[u8]) -> Vec<RleRun> {
    let mut runs: Vec<RleRun> = Vec::new();
    for &b in bytes {
        match runs.last_mut() {
            Some(r) if r.value == b && r.count < u32::MAX => r.count += 1,
            _ => runs.push(RleRun { value: b, count: 1 }),
        }
    }
    runs
}

pub fn rle_decode(runs: &[RleRun]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(runs.iter().map(|r| r.count as usize).sum());
    for (i, r) in runs.iter().enumerate() {
        if r.count == 0 {
            return Err(CodecError::Corrupt { section: "rle", detail: format!("run {i} has count 0") });
        }
        out.extend(std::iter::repeat(r.value).take(r.count as usize));
    }
    Ok(out)
}

/// Serializes runs as `value` followed by the LEB128 count.
pub fn runs_to_bytes(runs: &[RleRun]) -> Vec<u8> {
    let mut out = Vec::with_capacity(runs.len() * 2);
    for r in runs {
        out.push(r.value);
        let mut c = r.count;
        loop {
            let low = (c & 0x7f) as u8;
            c >>= 7;
            if c == 0 {
                out.push(low);
                break;
            }
            out.push(low | 0x80);
        }
    }
    out
}

pub fn runs_from_bytes(bytes: &[u8]) -> Result<Vec<RleRun>, CodecError> {
    let bad = |detail: &str| CodecError::Corrupt { section: "rle", detail: detail.to_string() };
    let mut runs = Vec::new();
    let mut it = bytes.iter();
    while let Some(&value) = it.next() {
        let mut count: u64 = 0;
        let mut shift = 0;
        loop {
            let b = *it.next().ok_or_else(|| bad("run count cut short"))?;
            count |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                break;
            }
            shift += 7;
            if shift > 28 {
                return Err(bad("run count overflows 32 bits"));
            }
        }
        let count = u32::try_from(count).map_err(|_| bad("run count overflows 32 bits"))?;
        runs.push(RleRun { value, count });
    }
    Ok(runs)
}
