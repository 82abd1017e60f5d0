//! Differentiable layer primitives recorded on a [`Tape`](crate::tensor::Tape).

mod activation;
mod concat;
mod conv;
mod loss;
mod norm;
mod pool;

pub use activation::Activation;
pub use conv::ConvSpec;
pub use norm::{BatchNormState, NormMode, BN_EPS, BN_MOMENTUM};
