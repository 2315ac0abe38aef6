//! Raw little-endian `f32` weight streams: no header, no padding.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub fn encode_f32le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Decode exactly `expected` values. A length mismatch reports expected and
/// actual byte counts.
pub fn decode_f32le(bytes: &[u8], expected: usize) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::Model(format!(
            "corrupt weight blob: expected {} bytes ({expected} f32 values), got {}",
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
