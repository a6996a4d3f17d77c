//! Adam with decoupled weight decay, initialization and the epoch loop.

mod adam;
mod init;
mod train;

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use init::{glorot_bound, init_model};
pub use train::{accuracy, train, train_with, PatchLayout, TrainOptions, TrainReport};
