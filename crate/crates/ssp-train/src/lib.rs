//! Training for the spectral propagation model: the composite rollout
//! objective with its hand-written gradient, an Adam optimizer with global
//! gradient clipping and a cosine learning-rate schedule, and a
//! deterministic training driver whose checkpoints resume bitwise.

pub mod adam;
pub mod config;
pub mod loss;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

pub use adam::{adam_update, global_norm, AdamState};
pub use config::{cosine_lr, LossWeights, TrainConfig};
pub use loss::{rollout_loss, LossBreakdown};
pub use trainer::{train, train_resumed, train_with_init, EpochStats, TrainReport};
