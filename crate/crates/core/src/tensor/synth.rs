//! Seeded synthetic feature blocks.
//!
//! Every call builds its own ChaCha8 generator from the seed argument, so the
//! output is a pure function of `(dist, m, d, seed)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use super::FeatureBlock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Uniform on `[lo, hi)`; `lo == hi` yields a constant block.
    Uniform { lo: f64, hi: f64 },
    /// Normal samples, clamped to `mean ± clip` when `clip > 0`.
    Gaussian { mean: f64, std: f64, clip: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return Err(Error::param(format!("invalid uniform range [{lo}, {hi})")));
                }
            }
            Distribution::Gaussian { mean, std, clip } => {
                if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
                    return Err(Error::param(format!(
                        "gaussian needs finite mean and std > 0, got mean={mean} std={std}"
                    )));
                }
                if !clip.is_finite() || clip < 0.0 {
                    return Err(Error::param(format!("gaussian clip must be >= 0, got {clip}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Distribution::Gaussian { mean, std, clip } => {
                write!(f, "gaussian:{mean},{std},{clip}")
            }
        }
    }
}

/// Parses `uniform:LO,HI` or `gaussian:MEAN,STD[,CLIP]`.
impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("distribution '{s}' lacks ':' arguments")))?;
        let nums = args
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::param(format!("bad number '{t}' in distribution '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dist = match (kind, nums.as_slice()) {
            ("uniform", &[lo, hi]) => Distribution::Uniform { lo, hi },
            ("gaussian", &[mean, std]) => Distribution::Gaussian {
                mean,
                std,
                clip: 0.0,
            },
            ("gaussian", &[mean, std, clip]) => Distribution::Gaussian { mean, std, clip },
            _ => return Err(Error::param(format!("unrecognised distribution '{s}'"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

pub fn gen_synthetic(dist: Distribution, m: usize, d: usize, seed: u64) -> Result<FeatureBlock> {
    dist.validate()?;
    if d == 0 {
        return Err(Error::shape("channel count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m * d;
    let data: Vec<f64> = match dist {
        Distribution::Uniform { lo, hi } => (0..n)
            .map(|_| lo + (hi - lo) * rng.random::<f64>())
            .collect(),
        Distribution::Gaussian { mean, std, clip } => {
            let normal = Normal::new(mean, std).map_err(|e| Error::param(e.to_string()))?;
            (0..n)
                .map(|_| {
                    let v = normal.sample(&mut rng);
                    if clip > 0.0 {
                        v.clamp(mean - clip, mean + clip)
                    } else {
                        v
                    }
                })
                .collect()
        }
    };
    FeatureBlock::new(data, m, d)
}
