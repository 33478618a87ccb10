//! Image IO, training, checkpoints and evaluation around `frelic-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod synthetic;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{AppError, AppResult};
pub use trainer::{TrainConfig, Trainer};
