//! Spectral normalization, GAN losses, Adam, and the training loop.

mod adam;
mod loss;
pub mod spectral;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use loss::{discriminator_loss, generator_loss, GeneratorLoss};
pub use trainer::{Metrics, TrainConfig, Trainer};
