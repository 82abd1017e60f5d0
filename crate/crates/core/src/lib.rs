//! Haze synthesis from depth, an inception-block dehazing GAN trained on a
//! small reverse-mode autodiff engine, and the image-quality and detection
//! metrics used to evaluate it.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod haze;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor, Var};
