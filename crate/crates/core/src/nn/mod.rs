//! A small differentiable layer: matrices, a reverse-mode tape, dense,
//! attention and batch-norm layers, and an Adam updater.

pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod params;
pub mod tape;

pub use layers::{
    activation, batch_norm, dense, init_attention, init_batch_norm, init_dense,
    single_head_attention, Activation,
};
pub use matrix::Matrix;
pub use params::{AdamConfig, Checkpoint, Param, ParamRecord, ParamSet, CHECKPOINT_FORMAT_VERSION};
pub use tape::{Tape, Var, BATCH_NORM_EPS, MASKED_LOGIT};
