//! Adaptive convolution blocks and the GAN machinery around them.
//!
//! The crate is layered bottom-up: [`tensor`], [`rng`] and [`autodiff`]
//! provide values, randomness and gradients; [`nn`] adds standard layers;
//! [`adaconv`] implements per-pixel regressed convolutions; [`zoo`] builds
//! generator and discriminator networks; [`gan`] trains them; [`data`]
//! handles datasets and image output.

pub mod adaconv;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gan;
mod linalg;
pub mod nn;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod zoo;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::{init_truncated_normal, sample_gaussian, Rng, RngState};
pub use tensor::Tensor;

#[cfg(any(test, feature = "testing"))]
pub mod testing;

#[cfg(test)]
mod grad_tests;
