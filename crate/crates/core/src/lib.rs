//! Core of a learned image codec built around hybrid spatial/channel
//! attention transforms and a channel-conditional Gaussian entropy model.
//!
//! The crate is `no_std` (it needs `alloc`) and free of IO: image files,
//! checkpoints, training loops and the command-line tool live in the
//! `frelic` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod codec;
pub mod coder;
pub mod config;
pub mod entropy;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod real;
pub mod tensor;
pub mod transforms;

pub use codec::{Model, TrainOutput};
pub use config::{FfnVariant, ModelConfig};
pub use error::{Error, Result};
pub use graph::{Graph, Padding, PoolRegion, Var};
pub use params::{ParamId, ParamSet, Parameter};
pub use real::Real;
pub use tensor::Tensor;
