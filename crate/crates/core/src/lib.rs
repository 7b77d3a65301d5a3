//! Latent-space discovery toolkit: generative compression, active learning,
//! attribute distillation and symbolic regression over physical experiments.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dae;
pub mod eql;
pub mod error;
pub mod exemplars;
pub mod linalg;
pub mod ndiff;
pub mod optimizer;
pub mod pipeline;
pub mod scalar;
pub mod vae;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the scalar-generic types.
pub type Tensor64 = ndiff::Tensor<f64>;
pub type Tape64 = ndiff::Tape<f64>;
pub type Mlp64 = ndiff::Mlp<f64>;
pub type Dense64 = ndiff::Dense<f64>;
pub type Mat64 = linalg::Mat<f64>;
pub type GpModel64 = optimizer::GpModel<f64>;
pub type KernelParams64 = optimizer::KernelParams<f64>;
pub type GainReport64 = pipeline::GainReport<f64>;
