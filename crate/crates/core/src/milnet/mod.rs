//! The MIL network: embedder, softsign attention, adaptive weighting with
//! pseudo-negative masking, affine classifier, and exact backpropagation.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod model;

pub use backward::backward;
pub use checkpoint::{load_model, save_model, Checkpoint, LayerCheckpoint};
pub(crate) use forward::embed_one;
pub use forward::{
    adaptive_pool, attention_pool, attention_weights, bce_loss, embed_instances, forward,
    forward_with_mask, pseudo_negative_mask, sigmoid, softmax, softsign, ForwardTrace,
};
pub use gradcheck::{grad_check, grad_check_trials, relative_error, GradCheck, GradCheckTrials};
pub use model::{Attention, Classifier, Dims, Embedder, Layer, MilModel, Params};
