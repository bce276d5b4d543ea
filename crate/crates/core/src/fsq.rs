//! Single-stage finite scalar quantization.
//!
//! Each channel `i` is snapped to `L_i` uniformly spaced levels on `[-1, 1]`
//! (both endpoints included), so the implicit codebook has exactly
//! `prod(L_i)` entries. Codes are combined into one index in little-endian
//! mixed radix: `index = c_0 + L_0 * (c_1 + L_1 * (c_2 + ...))`.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::FeatureBlock;

/// Per-channel level counts for one quantizer stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelsSpec {
    levels: Vec<u32>,
    codebook_size: u64,
}

impl LevelsSpec {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::param("levels list is empty"));
        }
        if let Some(&bad) = levels.iter().find(|&&l| l < 2) {
            return Err(Error::param(format!(
                "level count must be ≥ 2 (got {bad})"
            )));
        }
        let codebook_size = levels
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(l as u64))
            .ok_or_else(|| Error::param(format!("codebook size of {levels:?} overflows u64")))?;
        Ok(Self {
            levels,
            codebook_size,
        })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> u64 {
        self.codebook_size
    }

    /// Nominal rate, `sum(log2 L_i)` bits per vector.
    pub fn rate_bits(&self) -> f64 {
        self.levels.iter().map(|&l| (l as f64).log2()).sum()
    }

    /// Width in bits of a fixed-width field able to hold any index.
    pub fn packed_bits(&self) -> u32 {
        let max = self.codebook_size - 1;
        64 - max.leading_zeros()
    }

    pub fn index_of(&self, codes: &[u32]) -> u64 {
        debug_assert_eq!(codes.len(), self.levels.len());
        codes
            .iter()
            .zip(&self.levels)
            .rev()
            .fold(0u64, |acc, (&c, &l)| acc * l as u64 + c as u64)
    }

    pub fn codes_of(&self, index: u64) -> Result<Vec<u32>> {
        if index >= self.codebook_size {
            return Err(Error::param(format!(
                "index {index} outside codebook of size {}",
                self.codebook_size
            )));
        }
        let mut rest = index;
        Ok(self
            .levels
            .iter()
            .map(|&l| {
                let c = (rest % l as u64) as u32;
                rest /= l as u64;
                c
            })
            .collect())
    }
}

impl fmt::Display for LevelsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Per-channel codes of one vector together with their mixed-radix index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsqCode {
    pub codes: Vec<u32>,
    pub index: u64,
}

/// Clamps every scalar to `[-1, 1]`.
pub fn bound(z: &FeatureBlock) -> FeatureBlock {
    z.map(|v| v.clamp(-1.0, 1.0))
}

#[inline]
fn level_value(code: u32, levels: u32) -> f64 {
    code as f64 * 2.0 / (levels - 1) as f64 - 1.0
}

#[inline]
fn level_code(z: f64, levels: u32) -> u32 {
    let top = (levels - 1) as f64;
    // f64::round breaks ties away from zero; the argument is never negative
    // here so ties always go up.
    ((z.clamp(-1.0, 1.0) + 1.0) * 0.5 * top).round().clamp(0.0, top) as u32
}

/// Quantizes one scalar to the nearest of `levels` uniform points on `[-1, 1]`.
pub fn quantize_dim(z: f64, levels: u32) -> Result<(u32, f64)> {
    if levels < 2 {
        return Err(Error::param(format!("level count must be ≥ 2 (got {levels})")));
    }
    if !z.is_finite() {
        return Err(Error::Value(format!("cannot quantize {z}")));
    }
    let code = level_code(z, levels);
    Ok((code, level_value(code, levels)))
}

fn check_dim(z: &FeatureBlock, spec: &LevelsSpec) -> Result<()> {
    if z.d() != spec.dim() {
        return Err(Error::shape(format!(
            "block has {} channels but levels spec has {}",
            z.d(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Quantized values and per-vector indices, without materialising the
/// per-channel code lists.
pub(crate) fn quantize_indices(z: &FeatureBlock, spec: &LevelsSpec) -> Result<(FeatureBlock, Vec<u64>)> {
    check_dim(z, spec)?;
    let levels = spec.levels();
    let mut values = Vec::with_capacity(z.data().len());
    let mut indices = Vec::with_capacity(z.m());
    for row in z.rows() {
        let mut index = 0u64;
        let mut radix = 1u64;
        for (&x, &l) in row.iter().zip(levels) {
            let c = level_code(x, l);
            values.push(level_value(c, l));
            index += c as u64 * radix;
            radix = radix.wrapping_mul(l as u64);
        }
        indices.push(index);
    }
    Ok((FeatureBlock::from_raw(values, z.m(), z.d()), indices))
}

/// Quantizes every vector of `z` (clamped to `[-1, 1]` first).
pub fn fsq_quantize(z: &FeatureBlock, spec: &LevelsSpec) -> Result<(FeatureBlock, Vec<FsqCode>)> {
    check_dim(z, spec)?;
    let levels = spec.levels();
    let mut values = Vec::with_capacity(z.data().len());
    let mut codes = Vec::with_capacity(z.m());
    for row in z.rows() {
        let cs: Vec<u32> = row
            .iter()
            .zip(levels)
            .map(|(&x, &l)| level_code(x, l))
            .collect();
        values.extend(cs.iter().zip(levels).map(|(&c, &l)| level_value(c, l)));
        let index = spec.index_of(&cs);
        codes.push(FsqCode { codes: cs, index });
    }
    Ok((FeatureBlock::from_raw(values, z.m(), z.d()), codes))
}

/// Grid values of one codebook entry.
pub fn fsq_dequantize(index: u64, spec: &LevelsSpec) -> Result<Vec<f64>> {
    let codes = spec.codes_of(index)?;
    Ok(codes
        .iter()
        .zip(spec.levels())
        .map(|(&c, &l)| level_value(c, l))
        .collect())
}

/// Dequantizes a list of indices into a block.
pub fn fsq_dequantize_block(indices: &[u64], spec: &LevelsSpec) -> Result<FeatureBlock> {
    let mut data = Vec::with_capacity(indices.len() * spec.dim());
    for &idx in indices {
        data.extend(fsq_dequantize(idx, spec)?);
    }
    Ok(FeatureBlock::from_raw(data, indices.len(), spec.dim()))
}

/// `(codebook size, nominal bits per vector)`.
pub fn codebook_stats(spec: &LevelsSpec) -> (u64, f64) {
    (spec.codebook_size(), spec.rate_bits())
}

/// Forward-mode derivative of the quantizer under the straight-through
/// estimator: the Jacobian is the identity, so the tangent passes through
/// untouched.
pub fn ste_jvp(z: &FeatureBlock, tangent: &FeatureBlock, spec: &LevelsSpec) -> Result<FeatureBlock> {
    check_dim(z, spec)?;
    z.same_shape(tangent, "ste_jvp")?;
    Ok(tangent.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(levels: &[u32]) -> LevelsSpec {
        LevelsSpec::new(levels.to_vec()).unwrap()
    }

    #[test]
    fn bound_clamps() {
        let z = FeatureBlock::new(vec![0.5, 1.7, -3.0], 1, 3).unwrap();
        assert_eq!(bound(&z).data(), &[0.5, 1.0, -1.0]);
    }

    #[test]
    fn quantize_dim_examples() {
        assert_eq!(quantize_dim(0.6, 3).unwrap(), (2, 1.0));
        let (c, v) = quantize_dim(0.0, 8).unwrap();
        assert_eq!(c, 4);
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(quantize_dim(-1.0, 4).unwrap(), (0, -1.0));
        assert!(matches!(quantize_dim(0.0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn levels_validation() {
        assert!(matches!(LevelsSpec::new(vec![8, 1]), Err(Error::Parameter(_))));
        assert!(LevelsSpec::new(vec![]).is_err());
        assert!(LevelsSpec::new(vec![65536; 4]).is_err());
        assert!(LevelsSpec::new(vec![65535; 4]).is_ok());
    }

    #[test]
    fn zero_block_maps_to_center_code() {
        let z = FeatureBlock::zeros(5, 4).unwrap();
        let (values, codes) = fsq_quantize(&z, &spec(&[3, 3, 3, 3])).unwrap();
        assert!(values.data().iter().all(|&v| v == 0.0));
        assert!(codes.iter().all(|c| c.index == 40 && c.codes == vec![1, 1, 1, 1]));
    }

    #[test]
    fn grid_points_are_fixed() {
        let s = spec(&[8, 5, 4, 2]);
        for idx in [0, 17, 99, 319] {
            let v = fsq_dequantize(idx, &s).unwrap();
            let z = FeatureBlock::new(v.clone(), 1, 4).unwrap();
            let (q, codes) = fsq_quantize(&z, &s).unwrap();
            assert_eq!(q.data(), v.as_slice());
            assert_eq!(codes[0].index, idx);
        }
    }

    #[test]
    fn dequantize_examples() {
        let s = spec(&[8, 8, 8, 8]);
        assert_eq!(fsq_dequantize(0, &s).unwrap(), vec![-1.0; 4]);
        assert_eq!(fsq_dequantize(4095, &s).unwrap(), vec![1.0; 4]);
        // brute-force enumeration of the radix order locates 209
        let mut found = None;
        for c3 in 0..8u32 {
            for c2 in 0..8 {
                for c1 in 0..8 {
                    for c0 in 0..8 {
                        if c0 + 8 * c1 + 64 * c2 + 512 * c3 == 209 {
                            found = Some([c0, c1, c2, c3]);
                        }
                    }
                }
            }
        }
        assert_eq!(found, Some([1, 2, 3, 0]));
        let v = fsq_dequantize(209, &s).unwrap();
        let want = [-5.0 / 7.0, -3.0 / 7.0, -1.0 / 7.0, -1.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(fsq_dequantize(4096, &s), Err(Error::Parameter(_))));
    }

    #[test]
    fn uniform_error_magnitude() {
        use crate::tensor::{gen_synthetic, Distribution};
        let z = gen_synthetic(Distribution::Uniform { lo: -1.0, hi: 1.0 }, 10000, 4, 42).unwrap();
        let (q, _) = fsq_quantize(&z, &spec(&[8, 8, 8, 8])).unwrap();
        for c in 0..4 {
            let e: f64 = z
                .rows()
                .zip(q.rows())
                .map(|(a, b)| (a[c] - b[c]).abs())
                .sum::<f64>()
                / 10000.0;
            assert!((0.060..=0.083).contains(&e), "channel {c}: {e}");
        }
    }

    #[test]
    fn stats_for_named_configs() {
        assert_eq!(codebook_stats(&spec(&[8, 8, 8, 8])), (4096, 12.0));
        assert_eq!(codebook_stats(&spec(&[8, 8, 8, 4])), (2048, 11.0));
        assert_eq!(codebook_stats(&spec(&[4, 4, 4, 4, 4])), (1024, 10.0));
        assert_eq!(spec(&[8, 8, 8, 8]).packed_bits(), 12);
        assert_eq!(spec(&[3, 3]).packed_bits(), 4);
        assert_eq!(spec(&[2]).packed_bits(), 1);
    }

    #[test]
    fn ste_is_identity() {
        let s = spec(&[4, 4]);
        let z = FeatureBlock::new(vec![0.3, -0.9, 2.0, 0.0], 2, 2).unwrap();
        let ones = FeatureBlock::new(vec![1.0; 4], 2, 2).unwrap();
        assert_eq!(ste_jvp(&z, &ones, &s).unwrap(), ones);
        assert_eq!(ste_jvp(&z, &z, &s).unwrap(), z);
        let wrong = FeatureBlock::zeros(1, 2).unwrap();
        assert!(matches!(ste_jvp(&z, &wrong, &s), Err(Error::Shape(_))));
    }

    #[test]
    fn bijection_small_codebooks() {
        for levels in [vec![2, 3], vec![5, 5, 5], vec![8, 8, 8, 8], vec![7, 6, 5, 4, 3, 2], vec![16, 16, 16, 16]] {
            let s = spec(&levels);
            assert!(s.codebook_size() <= 65536);
            let idx: Vec<u64> = (0..s.codebook_size()).collect();
            let block = fsq_dequantize_block(&idx, &s).unwrap();
            let (_, back) = quantize_indices(&block, &s).unwrap();
            assert_eq!(back, idx, "levels {levels:?}");
        }
    }

    fn levels_and_values() -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
        prop::collection::vec(2u32..20, 1..6).prop_flat_map(|ls| {
            let n = ls.len();
            (Just(ls), prop::collection::vec(-1.5f64..1.5, n))
        })
    }

    proptest! {
        #[test]
        fn nearest_grid_point(z in -1.0f64..=1.0, l in 2u32..256) {
            let (_, v) = quantize_dim(z, l).unwrap();
            prop_assert!((z - v).abs() <= 1.0 / (l - 1) as f64 + 1e-12);
        }

        #[test]
        fn monotone_codes(a in -1.2f64..1.2, b in -1.2f64..1.2, l in 2u32..64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_dim(lo, l).unwrap().0 <= quantize_dim(hi, l).unwrap().0);
        }

        #[test]
        fn idempotent((ls, xs) in levels_and_values()) {
            let s = LevelsSpec::new(ls).unwrap();
            let d = s.dim();
            let z = FeatureBlock::new(xs, 1, d).unwrap();
            let (q1, c1) = fsq_quantize(&z, &s).unwrap();
            let deq = FeatureBlock::new(fsq_dequantize(c1[0].index, &s).unwrap(), 1, d).unwrap();
            prop_assert_eq!(deq.data(), q1.data());
            let (q2, c2) = fsq_quantize(&deq, &s).unwrap();
            prop_assert_eq!(q2.data(), q1.data());
            prop_assert_eq!(&c2, &c1);
            prop_assert!(c1[0].index < s.codebook_size());
            prop_assert_eq!(s.index_of(&c1[0].codes), c1[0].index);
        }

        #[test]
        fn rate_matches_size(ls in prop::collection::vec(2u32..300, 1..7)) {
            let s = LevelsSpec::new(ls).unwrap();
            let (size, rate) = codebook_stats(&s);
            let rel = (2f64.powf(rate) - size as f64).abs() / size as f64;
            prop_assert!(rel < 1e-9);
        }
    }
}
