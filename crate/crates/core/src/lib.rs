//! Hyperspectral image reconstruction from RGB via implicit neural
//! representations.
//!
//! A convolutional hypernetwork maps an RGB patch to an S×S grid of MLP
//! parameter vectors; each cell's MLP maps sinusoidally encoded pixel
//! coordinates together with the pixel's RGB value to an L-band spectrum.
//! The crate provides the differentiable compute kernel the model is built
//! on, the model itself, a training loop with checkpointing, spectral image
//! quality metrics (PSNR / SSIM / SAM), and a small container format plus
//! synthetic scene generators for desk-scale experiments.

pub mod autodiff;
pub mod cellmlp;
pub mod dataio;
pub mod encoding;
pub mod error;
pub mod hypernet;
pub mod metrics;
pub mod pipeline;

pub use autodiff::{adam_step, grad_check, AdamState, Element, ParamStore, Precision, Tensor};
pub use dataio::{HsiCube, SpectralResponse};
pub use error::{Error, Result};
pub use metrics::MetricReport;
