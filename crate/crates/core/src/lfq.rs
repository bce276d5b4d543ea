//! Lookup-free quantization: per-channel sign quantization to `{-1, +1}`.
//!
//! Ties (`z_i == 0`) map to `+1`. The index is the sign bit pattern with
//! channel 0 as the least significant bit.

use crate::error::{Error, Result};
use crate::tensor::FeatureBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LfqConfig {
    dim: u32,
}

impl LfqConfig {
    pub fn new(dim: u32) -> Result<Self> {
        if !(1..=63).contains(&dim) {
            return Err(Error::param(format!("lfq dim must be in 1..=63, got {dim}")));
        }
        Ok(Self { dim })
    }

    pub fn dim(self) -> usize {
        self.dim as usize
    }

    pub fn codebook_size(self) -> u64 {
        1u64 << self.dim
    }

    pub fn rate_bits(self) -> f64 {
        self.dim as f64
    }
}

pub fn lfq_quantize(z: &FeatureBlock, cfg: LfqConfig) -> Result<(FeatureBlock, Vec<u64>)> {
    if z.d() != cfg.dim() {
        return Err(Error::shape(format!(
            "block has {} channels, lfq dim is {}",
            z.d(),
            cfg.dim()
        )));
    }
    let mut values = Vec::with_capacity(z.data().len());
    let mut indices = Vec::with_capacity(z.m());
    for row in z.rows() {
        let mut index = 0u64;
        for (i, &x) in row.iter().enumerate() {
            if x >= 0.0 {
                index |= 1 << i;
                values.push(1.0);
            } else {
                values.push(-1.0);
            }
        }
        indices.push(index);
    }
    Ok((FeatureBlock::from_raw(values, z.m(), z.d()), indices))
}

pub fn lfq_dequantize(index: u64, cfg: LfqConfig) -> Result<Vec<f64>> {
    if index >= cfg.codebook_size() {
        return Err(Error::param(format!(
            "index {index} outside lfq codebook of size {}",
            cfg.codebook_size()
        )));
    }
    Ok((0..cfg.dim())
        .map(|i| if index >> i & 1 == 1 { 1.0 } else { -1.0 })
        .collect())
}
