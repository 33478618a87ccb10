//! Nonlinear analysis/synthesis transforms.

pub mod block;
pub mod casa;
pub mod ffn;
pub mod layers;
pub mod sasa;
pub mod stack;

pub use block::{Hscatb, StageConfig};
pub use casa::Casa;
pub use ffn::Ffn;
pub use sasa::Sasa;
pub use stack::{AnalysisTransform, Downsample, SynthesisTransform, Upsample, ANALYSIS_FACTOR};
