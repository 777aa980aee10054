//! Static post-training quantization toolkit for a desk-scale
//! spatial-temporal diffusion transformer.
//!
//! The pipeline quantizes weights channel-wise and activations tensor-wise,
//! optionally migrating quantization difficulty from activations to weights
//! with per-channel smoothing scales (aggregated across all denoising steps
//! or estimated per time range). All parameters are frozen into a
//! [`calib::TimeStepTable`] during offline calibration; inference then runs
//! a table-driven executor that computes no data-dependent statistics.
//!
//! # Modules
//!
//! - [`tensor`] -- dense row-major 2D tensors
//! - [`quant`] -- bin sizes / zero points, quantize/dequantize, float and
//!   integer linear paths, dynamic per-token baseline
//! - [`smooth`] -- smoothing scales and activation/weight migration
//! - [`calib`] -- time-range partitions, observers, calibration driver,
//!   alpha grid search
//! - [`model`] -- the toy spatial-temporal transformer denoiser, scheduler
//!   and synthetic data
//! - [`engine`] -- table-driven quantized executors and the runtime
//!   statistics audit

pub mod calib;
pub mod engine;
pub mod error;
pub mod model;
pub mod quant;
pub mod smooth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor2D;
