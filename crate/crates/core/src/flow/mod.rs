//! Dense optical flow between an onset and an apex frame.

pub mod config;
pub mod field;
pub mod horn_schunck;
pub mod lucas_kanade;
pub mod ops;
pub mod registry;
pub mod tvl1;

pub use config::{FlowConfig, FlowMethod, HornSchunckParams, LucasKanadeParams, Tvl1Params};
pub use field::{decode_flow, encode_flow, load_flow, save_flow, FlowField};
pub use horn_schunck::horn_schunck_observed;
pub use lucas_kanade::{lucas_kanade_with_mask, structure_tensor_min_eigenvalue};
pub use registry::{FlowEstimator, FlowRegistry};
pub use tvl1::tvl1_observed;

use crate::error::Result;
use crate::imaging::GrayImage;

/// Estimates flow with a built-in method.
pub fn estimate_flow(onset: &GrayImage, apex: &GrayImage, config: &FlowConfig) -> Result<FlowField> {
    FlowRegistry::new().estimate(onset, apex, config)
}
