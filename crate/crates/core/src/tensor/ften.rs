//! FTEN: a minimal little-endian tensor file.
//!
//! ```text
//! "FTEN" | version u8 = 1 | flags u8 (bit0: spatial) | D u32 | M u32
//!        | [H u32 | W u32]   when bit0 is set
//!        | M*D f32 values, row-major
//! ```
//!
//! Scalars are narrowed to `f32` on write, so only blocks whose values are
//! exactly representable in `f32` survive a save/load cycle bit-for-bit.

use std::fs;
use std::path::Path;

use super::FeatureBlock;
use crate::error::{Error, Result};

pub const FTEN_MAGIC: &[u8; 4] = b"FTEN";
pub const FTEN_VERSION: u8 = 1;
const FLAG_SPATIAL: u8 = 0b1;

pub fn encode_block(block: &FeatureBlock) -> Result<Vec<u8>> {
    let d = u32::try_from(block.d()).map_err(|_| Error::shape("D does not fit in u32"))?;
    let m = u32::try_from(block.m()).map_err(|_| Error::shape("M does not fit in u32"))?;
    let mut out = Vec::with_capacity(22 + block.data().len() * 4);
    out.extend_from_slice(FTEN_MAGIC);
    out.push(FTEN_VERSION);
    out.push(if block.spatial().is_some() { FLAG_SPATIAL } else { 0 });
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&m.to_le_bytes());
    if let Some((h, w)) = block.spatial() {
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    for (i, &v) in block.data().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::Value(format!(
                "value {v} at flat index {i} overflows f32"
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos,
                format!("truncated: need {n} bytes for {what}"),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_block(bytes: &[u8]) -> Result<FeatureBlock> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != FTEN_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"FTEN\""));
    }
    let version = cur.u8("version")?;
    if version != FTEN_VERSION {
        return Err(Error::UnsupportedVersion {
            version,
            expected: FTEN_VERSION,
        });
    }
    let flags_at = cur.pos;
    let flags = cur.u8("flags")?;
    if flags & !FLAG_SPATIAL != 0 {
        return Err(Error::format(flags_at, format!("unknown flag bits {flags:#04x}")));
    }
    let d_at = cur.pos;
    let d = cur.u32("D")? as usize;
    if d == 0 {
        return Err(Error::format(d_at, "D must be at least 1"));
    }
    let m = cur.u32("M")? as usize;
    let spatial = if flags & FLAG_SPATIAL != 0 {
        Some((cur.u32("H")?, cur.u32("W")?))
    } else {
        None
    };
    let n = m
        .checked_mul(d)
        .ok_or_else(|| Error::format(d_at, "M*D overflows"))?;
    let payload_at = cur.pos;
    let payload = cur.take(
        n.checked_mul(4)
            .ok_or_else(|| Error::format(payload_at, "payload size overflows"))?,
        "payload",
    )?;
    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.pos,
            format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        ));
    }
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::format(payload_at + 4 * i, "non-finite scalar"));
        }
        data.push(v as f64);
    }
    let block = FeatureBlock::new(data, m, d)?;
    match spatial {
        Some((h, w)) => block
            .with_spatial(h, w)
            .map_err(|e| Error::format(payload_at - 8, e.to_string())),
        None => Ok(block),
    }
}

pub fn save_block(block: &FeatureBlock, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_block(block)?)?;
    Ok(())
}

pub fn load_block(path: impl AsRef<Path>) -> Result<FeatureBlock> {
    decode_block(&fs::read(path)?)
}
