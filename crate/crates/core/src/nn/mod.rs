//! Standard layers: convolution, resize, dense, batch norm.

pub mod batchnorm;
pub mod conv;
pub mod layers;
pub mod resize;

pub use batchnorm::{BatchStats, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d_forward, conv_out_size, ConvOpts};
pub use layers::{BatchNorm, Conv2d, Dense, Mode};
pub use resize::resize_nn_2x_forward;

/// Slope of the discriminator's leaky ReLUs.
pub const LEAKY_SLOPE: f32 = 0.1;
