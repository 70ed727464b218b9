//! Factorized spectral propagation model for periodic 2D fields.
//!
//! The model maps a window of field frames into a compact latent window,
//! advances that window by one full window length with a frequency-local
//! learned flow plus a small spatial correction, and decodes the result back
//! to the grid. Every layer carries a hand-written adjoint so whole rollouts
//! can be differentiated without an autodiff framework.

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod layers;
pub mod model;
pub mod ops;
pub mod params;
pub mod penalties;
pub mod propagator;

#[cfg(test)]
pub(crate) mod testutil;

pub use checkpoint::{
    load_params, params_to_tensors, read_checkpoint, save_params, tensors_to_params,
    write_checkpoint, CheckpointData, TensorEntry,
};
pub use config::{BackboneMode, DecoderKind, EncoderKind, ModelConfig, GATE_HIDDEN};
pub use model::{ForwardStep, Model, StepCache};
pub use params::{
    BlockParams, ConvParams, Layout, MlpParams, ParamSet, PointwiseParams, SlotInfo, SlotMut,
    SlotRef, UpsampleParams,
};
pub use penalties::{normality_penalty, orth_penalty, ORTH_EPS};
pub use propagator::{PropagateCache, PropagateOutput};
