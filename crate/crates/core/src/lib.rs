//! Residual finite scalar quantization.
//!
//! A `K`-stage residual quantizer where every stage snaps a conditioned copy
//! of the running residual onto a fixed per-channel grid, maps the result
//! back through the inverse conditioning, and subtracts it from the residual.
//! Conditioning is either nothing, a per-stage scale, or an invertible
//! per-vector layer normalization.
//!
//! The crate also carries a lookup-free (sign) quantizer baseline, residual
//! decay diagnostics, a scale fitter and a bit-exact index stream.

pub mod codec;
pub mod conditioning;
pub mod error;
pub mod fit;
pub mod fsq;
pub mod lfq;
pub mod pipeline;
pub mod tensor;

pub use conditioning::{Conditioning, InverseState, LnState, ScaleParam, Strategy};
pub use error::{Error, Result};
pub use fsq::{FsqCode, LevelsSpec};
pub use pipeline::{DecayReport, RfsqConfig, RfsqOutput, StageDecay};
pub use tensor::{FeatureBlock, MetricsReport};
