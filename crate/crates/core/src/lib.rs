//! Attention-based multiple-instance learning with adaptive instance
//! weighting and hard negative bag mining.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which the CLI and experiment
//! harness use throughout.

pub mod bagdata;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod milnet;
pub mod mining;
pub mod optim;
pub mod preprocess;
mod scalar;
pub(crate) mod seed;

pub use error::{MilError, Result};
pub use scalar::Scalar;

pub type Bag = bagdata::Bag<f64>;
pub type Dataset = bagdata::Dataset<f64>;
pub type Instance = bagdata::Instance<f64>;
pub type MilModel = milnet::MilModel<f64>;
pub type ForwardTrace = milnet::ForwardTrace<f64>;
pub type Gradients = milnet::Params<f64>;
pub type AdamState = optim::AdamState<f64>;
pub type TrainReport = optim::TrainReport<f64>;
pub type HardPool = mining::HardPool<f64>;

pub type MilModel32 = milnet::MilModel<f32>;
pub type Dataset32 = bagdata::Dataset<f32>;
