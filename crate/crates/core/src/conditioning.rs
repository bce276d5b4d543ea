//! Invertible per-stage conditioning applied before each quantizer stage.
//!
//! Three transforms are supported: pass-through, multiplication by a stage
//! scale `alpha`, and a per-vector layer normalization over the channel axis
//! (no affine parameters). Every forward call returns the state needed to undo
//! it exactly.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::FeatureBlock;

pub const DEFAULT_LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    Scale,
    LayerNorm,
}

impl Strategy {
    pub fn wire_code(self) -> u8 {
        match self {
            Strategy::None => 0,
            Strategy::Scale => 1,
            Strategy::LayerNorm => 2,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Strategy::None),
            1 => Some(Strategy::Scale),
            2 => Some(Strategy::LayerNorm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Scale => "scale",
            Strategy::LayerNorm => "layernorm",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "scale" => Ok(Strategy::Scale),
            "layernorm" => Ok(Strategy::LayerNorm),
            _ => Err(Error::param(format!(
                "unknown strategy '{s}' (expected none, scale or layernorm)"
            ))),
        }
    }
}

/// Positive scale factor for one stage. Defaults to 1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParam(f64);

impl ScaleParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::param(format!("scale must be positive and finite, got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for ScaleParam {
    fn default() -> Self {
        Self(1.0)
    }
}

/// Per-vector statistics retained by the layer normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LnState {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    eps: f64,
}

impl LnState {
    /// Measures mean and `sqrt(var + eps)` of every vector (population
    /// variance over the channels).
    pub fn from_block(r: &FeatureBlock, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let d = r.d() as f64;
        let mut mu = Vec::with_capacity(r.m());
        let mut sigma = Vec::with_capacity(r.m());
        for row in r.rows() {
            let rough = row.iter().sum::<f64>() / d;
            // second pass removes the rounding left in the first mean
            let mean = rough + row.iter().map(|x| x - rough).sum::<f64>() / d;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
            mu.push(mean);
            sigma.push((var + eps).sqrt());
        }
        Ok(Self { mu, sigma, eps })
    }

    /// Rebuilds a state from stored statistics.
    pub fn from_parts(mu: Vec<f64>, sigma: Vec<f64>, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if mu.len() != sigma.len() {
            return Err(Error::shape(format!(
                "{} means but {} deviations",
                mu.len(),
                sigma.len()
            )));
        }
        let floor = eps.sqrt();
        if let Some(m) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!("non-finite mean for vector {m}")));
        }
        if let Some(m) = sigma.iter().position(|&s| !s.is_finite() || s < floor) {
            return Err(Error::Value(format!(
                "deviation {} for vector {m} is below sqrt(eps) = {floor}",
                sigma[m]
            )));
        }
        Ok(Self { mu, sigma, eps })
    }

    /// Rounds the statistics to `f32`, the precision they are stored at in a
    /// stream. Deviations never drop below `sqrt(eps)`.
    pub fn to_wire_precision(&self) -> Self {
        let floor = self.eps.sqrt();
        let sigma = self
            .sigma
            .iter()
            .map(|&s| {
                let mut n = s as f32;
                while (n as f64) < floor {
                    n = n.next_up();
                }
                n as f64
            })
            .collect();
        Self {
            mu: self.mu.iter().map(|&v| v as f32 as f64).collect(),
            sigma,
            eps: self.eps,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::param(format!("layernorm eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Forward transform selector with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning {
    None,
    Scale(ScaleParam),
    LayerNorm { eps: f64 },
}

impl Conditioning {
    pub fn strategy(&self) -> Strategy {
        match self {
            Conditioning::None => Strategy::None,
            Conditioning::Scale(_) => Strategy::Scale,
            Conditioning::LayerNorm { .. } => Strategy::LayerNorm,
        }
    }
}

/// What a decoder needs to map a stage's quantized values back.
#[derive(Debug, Clone, PartialEq)]
pub enum InverseState {
    None,
    Scale(ScaleParam),
    LayerNorm(LnState),
}

impl InverseState {
    pub fn strategy(&self) -> Strategy {
        match self {
            InverseState::None => Strategy::None,
            InverseState::Scale(_) => Strategy::Scale,
            InverseState::LayerNorm(_) => Strategy::LayerNorm,
        }
    }
}

fn check_finite(r: &FeatureBlock, what: &str) -> Result<()> {
    match r.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Value(format!("{what}: non-finite value at flat index {i}"))),
        None => Ok(()),
    }
}

pub fn condition(r: &FeatureBlock, how: &Conditioning) -> Result<(FeatureBlock, InverseState)> {
    let state = match *how {
        Conditioning::None => InverseState::None,
        Conditioning::Scale(p) => InverseState::Scale(p),
        Conditioning::LayerNorm { eps } => InverseState::LayerNorm(LnState::from_block(r, eps)?),
    };
    let out = condition_with(r, &state)?;
    Ok((out, state))
}

/// Applies the forward transform described by an existing state.
pub fn condition_with(r: &FeatureBlock, state: &InverseState) -> Result<FeatureBlock> {
    check_finite(r, "condition")?;
    let out = match state {
        InverseState::None => r.clone(),
        InverseState::Scale(p) => {
            let alpha = p.alpha();
            r.map(|x| alpha * x)
        }
        InverseState::LayerNorm(ln) => {
            check_state_len(r, ln)?;
            let mut data = Vec::with_capacity(r.data().len());
            for ((row, &mu), &sigma) in r.rows().zip(&ln.mu).zip(&ln.sigma) {
                data.extend(row.iter().map(|x| (x - mu) / sigma));
            }
            FeatureBlock::new(data, r.m(), r.d())?
        }
    };
    check_finite(&out, "condition")?;
    Ok(out)
}

fn check_state_len(q: &FeatureBlock, ln: &LnState) -> Result<()> {
    if ln.len() != q.m() {
        return Err(Error::shape(format!(
            "layernorm state covers {} vectors, block has {}",
            ln.len(),
            q.m()
        )));
    }
    Ok(())
}

pub fn decondition(q: &FeatureBlock, state: &InverseState) -> Result<FeatureBlock> {
    match state {
        InverseState::None => Ok(q.clone()),
        InverseState::Scale(p) => {
            let alpha = p.alpha();
            Ok(q.map(|x| x / alpha))
        }
        InverseState::LayerNorm(ln) => {
            check_state_len(q, ln)?;
            let mut data = Vec::with_capacity(q.data().len());
            for ((row, &mu), &sigma) in q.rows().zip(&ln.mu).zip(&ln.sigma) {
                data.extend(row.iter().map(|x| x * sigma + mu));
            }
            FeatureBlock::new(data, q.m(), q.d())
        }
    }
}
