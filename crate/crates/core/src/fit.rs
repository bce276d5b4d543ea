//! Stage-by-stage fitting of the scale strategy's alphas.
//!
//! The objective `alpha -> mse(r_{k-1}, d_k)` is piecewise constant in alpha,
//! so no gradients are available. Each stage is fitted with earlier stages
//! frozen: a coarse scan over `log alpha` brackets the best basin, then a
//! golden-section search refines within the bracket.

use crate::conditioning::{decondition, InverseState, ScaleParam, Strategy};
use crate::error::{Error, Result};
use crate::fsq::{self, LevelsSpec};
use crate::pipeline::{rfsq_quantize, RfsqConfig};
use crate::tensor::{mse, FeatureBlock};

pub const ALPHA_MIN: f64 = 0.25;
pub const ALPHA_MAX: f64 = 64.0;
/// Relative tolerance on alpha (absolute on `log alpha`).
pub const ALPHA_REL_TOL: f64 = 1e-3;
const SCAN_POINTS: usize = 33;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes `f` on `[lo, hi]` by golden-section search until the bracket
/// is narrower than `tol`. Returns the best point evaluated.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

fn stage_error(residual: &FeatureBlock, spec: &LevelsSpec, alpha: f64) -> Result<(f64, FeatureBlock)> {
    let state = InverseState::Scale(ScaleParam::new(alpha)?);
    let scaled = crate::conditioning::condition_with(residual, &state)?;
    let (values, _) = fsq::quantize_indices(&scaled, spec)?;
    let contribution = decondition(&values, &state)?;
    Ok((mse(residual, &contribution)?, contribution))
}

fn wire(alpha: f64) -> f64 {
    alpha as f32 as f64
}

/// Best alpha for one stage, or 1.0 if nothing beats it.
fn fit_stage(residual: &FeatureBlock, spec: &LevelsSpec) -> Result<f64> {
    let (lo, hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let eval = |log_alpha: f64| -> f64 {
        stage_error(residual, spec, wire(log_alpha.exp()))
            .map(|(e, _)| e)
            .unwrap_or(f64::INFINITY)
    };
    let scan: Vec<f64> = (0..SCAN_POINTS).map(|i| eval(lo + step * i as f64)).collect();
    let best_i = scan
        .iter()
        .enumerate()
        .fold(0, |b, (i, &e)| if e < scan[b] { i } else { b });
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let (x, fx) = golden_section_min(eval, a, b, ALPHA_REL_TOL);
    let (x, fx) = if scan[best_i] < fx {
        (lo + step * best_i as f64, scan[best_i])
    } else {
        (x, fx)
    };
    let unit = stage_error(residual, spec, 1.0)?.0;
    Ok(if fx < unit { wire(x.exp()) } else { 1.0 })
}

/// Fits one alpha per stage on `train`, greedily in stage order.
///
/// The returned alphas never give a larger total error on `train` than all
/// alphas at 1.0.
pub fn fit_scales(train: &FeatureBlock, cfg: &RfsqConfig) -> Result<Vec<f64>> {
    if cfg.strategy() != Strategy::Scale {
        return Err(Error::param(format!(
            "fit_scales needs the scale strategy, config uses {}",
            cfg.strategy()
        )));
    }
    if train.d() != cfg.dim() {
        return Err(Error::shape(format!(
            "training block has {} channels, config expects {}",
            train.d(),
            cfg.dim()
        )));
    }
    let mut residual = train.clone();
    let mut alphas = Vec::with_capacity(cfg.stages());
    for spec in cfg.levels() {
        let alpha = if residual.is_empty() { 1.0 } else { fit_stage(&residual, spec)? };
        let (_, contribution) = stage_error(&residual, spec, alpha)?;
        residual = residual.sub(&contribution);
        alphas.push(alpha);
    }
    let ones = vec![1.0; cfg.stages()];
    let fitted_err = mse(train, &rfsq_quantize(train, &cfg.with_scales(alphas.clone())?)?.q_total)?;
    let unit_err = mse(train, &rfsq_quantize(train, &cfg.with_scales(ones.clone())?)?.q_total)?;
    Ok(if fitted_err <= unit_err { alphas } else { ones })
}
