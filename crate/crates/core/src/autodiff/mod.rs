//! Minimal differentiable compute kernel.
//!
//! Dense layers, strided 2-D convolution, activations, an L1 loss, the Adam
//! optimizer, and a finite-difference gradient checker. Every other module
//! builds on the [`Tensor`] type defined here. Graphs are confined to one
//! thread; trained parameters live in a plain [`ParamStore`] buffer that can
//! be shared read-only.

mod adam;
mod element;
mod gradcheck;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use element::{Element, Precision};
pub use gradcheck::{grad_check, FnObjective, ScalarObjective};
pub use ops::{
    add, add_scalar, channel_fiber, conv2d_forward, dense_forward, l1_loss, leaky_relu, mul,
    narrow, permute_to_chw, reshape, scale, sigmoid, spatial_instance_norm, stitch_grid, sum,
};
pub use params::{ParamSpec, ParamStore};
pub use tensor::Tensor;
