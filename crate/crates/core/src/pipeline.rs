//! The residual quantizer.
//!
//! For `k = 1..K`, with `r_0 = z`:
//!
//! ```text
//! c_k        = condition_k(r_{k-1})
//! values_k   = fsq_k(bound(c_k))            (indices I_k)
//! d_k        = condition_k^{-1}(values_k)
//! r_k        = r_{k-1} - d_k
//! q_total   += d_k
//! ```
//!
//! so `z = q_total + r_K` holds by construction for every strategy. The
//! accumulated contributions are the de-conditioned `d_k`, never the raw grid
//! values, since those live in the conditioned space.

use crate::conditioning::{condition_with, decondition, InverseState, LnState, ScaleParam, Strategy};
use crate::error::{Error, Result};
use crate::fsq::{self, LevelsSpec};
use crate::tensor::FeatureBlock;

/// Number of stages, per-stage grids and the conditioning strategy.
///
/// Scales and the layernorm epsilon are held at `f32` precision, the
/// precision they are transmitted at.
#[derive(Debug, Clone, PartialEq)]
pub struct RfsqConfig {
    levels: Vec<LevelsSpec>,
    strategy: Strategy,
    scales: Vec<ScaleParam>,
    ln_eps: Option<f64>,
}

fn to_wire_f64(v: f64, what: &str) -> Result<f64> {
    let w = v as f32 as f64;
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::param(format!("{what} {v} is not a positive f32")));
    }
    Ok(w)
}

impl RfsqConfig {
    /// `scales` must be given exactly for the scale strategy and `ln_eps`
    /// exactly for layernorm.
    pub fn new(
        levels: Vec<LevelsSpec>,
        strategy: Strategy,
        scales: Option<Vec<f64>>,
        ln_eps: Option<f64>,
    ) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::param("at least one stage is required"));
        };
        let d = first.dim();
        if let Some((k, s)) = levels.iter().enumerate().find(|(_, s)| s.dim() != d) {
            return Err(Error::param(format!(
                "stage {} has {} channels, stage 1 has {d}",
                k + 1,
                s.dim()
            )));
        }
        let scales = match (strategy, scales) {
            (Strategy::Scale, Some(a)) => {
                if a.len() != levels.len() {
                    return Err(Error::param(format!(
                        "{} scales given for {} stages",
                        a.len(),
                        levels.len()
                    )));
                }
                a.into_iter()
                    .map(|v| ScaleParam::new(to_wire_f64(v, "scale")?))
                    .collect::<Result<Vec<_>>>()?
            }
            (Strategy::Scale, None) => {
                return Err(Error::param("scale strategy needs one scale per stage"))
            }
            (_, Some(_)) => {
                return Err(Error::param(format!("scales given for strategy {strategy}")))
            }
            (_, None) => Vec::new(),
        };
        let ln_eps = match (strategy, ln_eps) {
            (Strategy::LayerNorm, Some(e)) => Some(to_wire_f64(e, "layernorm eps")?),
            (Strategy::LayerNorm, None) => {
                return Err(Error::param("layernorm strategy needs an eps"))
            }
            (_, Some(_)) => {
                return Err(Error::param(format!("eps given for strategy {strategy}")))
            }
            (_, None) => None,
        };
        Ok(Self {
            levels,
            strategy,
            scales,
            ln_eps,
        })
    }

    pub fn none(levels: Vec<LevelsSpec>) -> Result<Self> {
        Self::new(levels, Strategy::None, None, None)
    }

    pub fn scaled(levels: Vec<LevelsSpec>, alphas: Vec<f64>) -> Result<Self> {
        Self::new(levels, Strategy::Scale, Some(alphas), None)
    }

    /// Scale strategy with every alpha at its initial value of 1.0.
    pub fn scaled_unit(levels: Vec<LevelsSpec>) -> Result<Self> {
        let k = levels.len();
        Self::scaled(levels, vec![1.0; k])
    }

    pub fn layernorm(levels: Vec<LevelsSpec>, eps: f64) -> Result<Self> {
        Self::new(levels, Strategy::LayerNorm, None, Some(eps))
    }

    /// `stages` copies of one grid.
    pub fn repeated(
        levels: &LevelsSpec,
        stages: usize,
        strategy: Strategy,
    ) -> Result<Self> {
        let all = vec![levels.clone(); stages];
        match strategy {
            Strategy::None => Self::none(all),
            Strategy::Scale => Self::scaled_unit(all),
            Strategy::LayerNorm => Self::layernorm(all, crate::conditioning::DEFAULT_LN_EPS),
        }
    }

    /// Same grids with new stage scales.
    pub fn with_scales(&self, alphas: Vec<f64>) -> Result<Self> {
        Self::scaled(self.levels.clone(), alphas)
    }

    pub fn stages(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn levels(&self) -> &[LevelsSpec] {
        &self.levels
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn scales(&self) -> &[ScaleParam] {
        &self.scales
    }

    pub fn ln_eps(&self) -> Option<f64> {
        self.ln_eps
    }

    /// Sum of the nominal per-stage rates.
    pub fn index_rate_bits(&self) -> f64 {
        self.levels.iter().map(LevelsSpec::rate_bits).sum()
    }

    fn stage_state(&self, k: usize, r: &FeatureBlock) -> Result<InverseState> {
        Ok(match self.strategy {
            Strategy::None => InverseState::None,
            Strategy::Scale => InverseState::Scale(self.scales[k]),
            Strategy::LayerNorm => {
                let eps = self.ln_eps.expect("validated on construction");
                InverseState::LayerNorm(LnState::from_block(r, eps)?.to_wire_precision())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfsqOutput {
    /// Sum of the de-conditioned stage contributions.
    pub q_total: FeatureBlock,
    /// Per stage, one codebook index per vector.
    pub indices: Vec<Vec<u64>>,
    /// De-conditioned stage contributions `d_k`.
    pub contributions: Vec<FeatureBlock>,
    pub final_residual: FeatureBlock,
    /// Per stage inverse state; everything a decoder needs besides indices.
    pub side_info: Vec<InverseState>,
}

/// Everything observed while running one stage.
struct StageTrace<'a> {
    residual_in: &'a FeatureBlock,
    conditioned: &'a FeatureBlock,
    contribution: &'a FeatureBlock,
    residual_out: &'a FeatureBlock,
    indices: &'a [u64],
}

fn check_input(z: &FeatureBlock, cfg: &RfsqConfig) -> Result<()> {
    if z.d() != cfg.dim() {
        return Err(Error::shape(format!(
            "block has {} channels, config expects {}",
            z.d(),
            cfg.dim()
        )));
    }
    Ok(())
}

fn run(
    z: &FeatureBlock,
    cfg: &RfsqConfig,
    mut observe: impl FnMut(usize, StageTrace<'_>),
) -> Result<RfsqOutput> {
    check_input(z, cfg)?;
    let k_total = cfg.stages();
    let mut residual = z.clone();
    let mut q_total = FeatureBlock::zeros(z.m(), z.d())?;
    let mut indices = Vec::with_capacity(k_total);
    let mut contributions = Vec::with_capacity(k_total);
    let mut side_info = Vec::with_capacity(k_total);
    for (k, spec) in cfg.levels().iter().enumerate() {
        let state = cfg.stage_state(k, &residual)?;
        let conditioned = condition_with(&residual, &state)?;
        let (values, idx) = fsq::quantize_indices(&conditioned, spec)?;
        let contribution = decondition(&values, &state)?;
        let next = residual.sub(&contribution);
        q_total.add_assign(&contribution);
        observe(
            k,
            StageTrace {
                residual_in: &residual,
                conditioned: &conditioned,
                contribution: &contribution,
                residual_out: &next,
                indices: &idx,
            },
        );
        residual = next;
        indices.push(idx);
        contributions.push(contribution);
        side_info.push(state);
    }
    Ok(RfsqOutput {
        q_total,
        indices,
        contributions,
        final_residual: residual,
        side_info,
    })
}

pub fn rfsq_quantize(z: &FeatureBlock, cfg: &RfsqConfig) -> Result<RfsqOutput> {
    run(z, cfg, |_, _| {})
}

/// Rebuilds `q_total` from indices and side information.
///
/// `side_info` may be empty for the none strategy; otherwise it must hold
/// one state per stage matching the configured strategy.
pub fn rfsq_dequantize(
    indices: &[Vec<u64>],
    side_info: &[InverseState],
    cfg: &RfsqConfig,
) -> Result<FeatureBlock> {
    let k_total = cfg.stages();
    if indices.len() != k_total {
        return Err(Error::param(format!(
            "{} index lists for {k_total} stages",
            indices.len()
        )));
    }
    let m = indices[0].len();
    if let Some(k) = indices.iter().position(|v| v.len() != m) {
        return Err(Error::param(format!(
            "stage {} has {} indices, stage 1 has {m}",
            k + 1,
            indices[k].len()
        )));
    }
    let implicit;
    let states: &[InverseState] = if side_info.is_empty() && cfg.strategy() == Strategy::None {
        implicit = vec![InverseState::None; k_total];
        &implicit
    } else {
        side_info
    };
    if states.len() != k_total {
        return Err(Error::param(format!(
            "side information for {} stages, config has {k_total}",
            states.len()
        )));
    }
    for (k, s) in states.iter().enumerate() {
        if s.strategy() != cfg.strategy() {
            return Err(Error::param(format!(
                "stage {} side information is {}, config strategy is {}",
                k + 1,
                s.strategy(),
                cfg.strategy()
            )));
        }
        if let InverseState::LayerNorm(ln) = s {
            if ln.len() != m {
                return Err(Error::param(format!(
                    "stage {} layernorm state covers {} vectors, stream has {m}",
                    k + 1,
                    ln.len()
                )));
            }
        }
    }
    let mut q_total = FeatureBlock::zeros(m, cfg.dim())?;
    for ((idx, spec), state) in indices.iter().zip(cfg.levels()).zip(states) {
        let values = fsq::fsq_dequantize_block(idx, spec)?;
        q_total.add_assign(&decondition(&values, state)?);
    }
    Ok(q_total)
}

/// Residual statistics of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDecay {
    /// Mean `|r_k|` over all entries, after this stage.
    pub mean_abs_residual: f64,
    /// Per-vector population std of the conditioned stage input (before the
    /// clamp to `[-1, 1]`), averaged over vectors.
    pub input_std: f64,
    /// Fraction of the stage codebook hit at least once.
    pub code_utilization: f64,
    /// Empirical entropy of the stage indices, bits.
    pub code_entropy: f64,
    /// `mse(r_{k-1}, d_k)`, the error left after this stage.
    pub stage_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub stages: Vec<StageDecay>,
}

fn mean_vector_std(block: &FeatureBlock) -> f64 {
    if block.m() == 0 {
        return 0.0;
    }
    let d = block.d() as f64;
    let total: f64 = block
        .rows()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / d;
            (row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d).sqrt()
        })
        .sum();
    total / block.m() as f64
}

/// Utilization and entropy (bits) of an index histogram.
pub fn index_usage(indices: &[u64], codebook_size: u64) -> (f64, f64) {
    if indices.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut distinct = 0u64;
    let mut entropy = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        distinct += 1;
        let p = run.len() as f64 / n;
        entropy -= p * p.log2();
    }
    (distinct as f64 / codebook_size as f64, entropy.max(0.0))
}

pub fn decay_diagnostics(z: &FeatureBlock, cfg: &RfsqConfig) -> Result<DecayReport> {
    let mut stages = Vec::with_capacity(cfg.stages());
    let n = z.data().len().max(1) as f64;
    run(z, cfg, |k, t| {
        let (code_utilization, code_entropy) =
            index_usage(t.indices, cfg.levels()[k].codebook_size());
        let mean_abs_residual = t.residual_out.data().iter().map(|v| v.abs()).sum::<f64>() / n;
        let stage_mse = t
            .residual_in
            .data()
            .iter()
            .zip(t.contribution.data())
            .map(|(r, d)| (r - d) * (r - d))
            .sum::<f64>()
            / n;
        stages.push(StageDecay {
            mean_abs_residual,
            input_std: mean_vector_std(t.conditioned),
            code_utilization,
            code_entropy,
            stage_mse,
        });
    })?;
    Ok(DecayReport { stages })
}
