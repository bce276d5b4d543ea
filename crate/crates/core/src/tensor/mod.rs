//! Feature blocks, synthetic data, reconstruction metrics and the FTEN file
//! format.

mod block;
mod ften;
mod metrics;
mod synth;

pub use block::FeatureBlock;
pub use ften::{decode_block, encode_block, load_block, save_block, FTEN_MAGIC, FTEN_VERSION};
pub use metrics::{compute_metrics, mse, psnr_from_mse, MetricsReport, PSNR_PEAK};
pub use synth::{gen_synthetic, Distribution};
