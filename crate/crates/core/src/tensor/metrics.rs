use super::FeatureBlock;
use crate::error::Result;

/// Peak signal value used for PSNR; features are assumed to live in `[0, 1]`
/// scale even when they do not.
pub const PSNR_PEAK: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub l1: f64,
    pub mse: f64,
    /// Decibels; `f64::INFINITY` when `mse == 0`.
    pub psnr: f64,
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10()
    }
}

/// Mean absolute error, mean squared error and PSNR between two blocks.
///
/// Empty blocks compare as identical.
pub fn compute_metrics(a: &FeatureBlock, b: &FeatureBlock) -> Result<MetricsReport> {
    a.same_shape(b, "compute_metrics")?;
    let n = a.data().len();
    if n == 0 {
        return Ok(MetricsReport {
            l1: 0.0,
            mse: 0.0,
            psnr: f64::INFINITY,
        });
    }
    let (abs, sq) = a
        .data()
        .iter()
        .zip(b.data())
        .fold((0.0, 0.0), |(abs, sq), (x, y)| {
            let e = x - y;
            (abs + e.abs(), sq + e * e)
        });
    let mse = sq / n as f64;
    Ok(MetricsReport {
        l1: abs / n as f64,
        mse,
        psnr: psnr_from_mse(mse),
    })
}

/// Mean squared error only; shapes must match.
pub fn mse(a: &FeatureBlock, b: &FeatureBlock) -> Result<f64> {
    compute_metrics(a, b).map(|r| r.mse)
}
