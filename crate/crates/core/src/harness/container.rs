//! Binary dictionary container.
//!
//! Layout: the 8-byte magic `BLKDICT1`, then `m` and `p` as little-endian
//! `u64`, then the `p` blocks one after another, each as `m·m` little-endian
//! `f64` in row-major order.

use std::io::{Read, Write};

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::BlockDictionary;

pub const CONTAINER_MAGIC: &[u8; 8] = b"BLKDICT1";

/// Refuse headers that would need more than this many entries.
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_dictionary<W: Write>(dict: &BlockDictionary, mut out: W) -> Result<()> {
    let m = dict.m();
    out.write_all(CONTAINER_MAGIC)?;
    out.write_all(&(m as u64).to_le_bytes())?;
    out.write_all(&(dict.p() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m * m * 8);
    for block in dict.blocks() {
        buf.clear();
        for r in 0..m {
            for c in 0..m {
                buf.extend_from_slice(&block[(r, c)].to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a container and validates the result as a [`BlockDictionary`].
pub fn read_dictionary<R: Read>(mut input: R) -> Result<BlockDictionary> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a dictionary header".into()))?;
    if &magic != CONTAINER_MAGIC {
        return Err(Error::Format("not a dictionary container (bad magic)".into()));
    }
    let m = read_u64(&mut input)?;
    let p = read_u64(&mut input)?;
    if m.checked_mul(m).and_then(|e| e.checked_mul(p)).is_none_or(|e| e > MAX_ENTRIES) {
        return Err(Error::Format(format!("implausible header m = {m}, p = {p}")));
    }
    let (m, p) = (m as usize, p as usize);
    let mut blocks = Vec::with_capacity(p);
    let mut raw = vec![0u8; m * m * 8];
    for i in 0..p {
        input
            .read_exact(&mut raw)
            .map_err(|_| Error::Format(format!("truncated payload in block {i}")))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        blocks.push(Mat::from_fn(m, m, |r, c| values[r * m + c]));
    }
    BlockDictionary::new(blocks)
}
