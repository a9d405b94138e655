//! Minimal differentiable computation stack: NCHW tensors, a static layer
//! graph with reverse-mode gradients, Adam, and the loss functions the
//! mapper and classifier train with. Training runs in `f32`; every kernel is
//! also instantiated in `f64` for finite-difference verification.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::{AdamParams, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use layer::Layer;
pub use network::{Grads, NetBuilder, Network, Tape};
pub use tensor::{Scalar, Shape, Tensor};
