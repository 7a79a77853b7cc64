//! Experiment runner for adaptive-convolution GANs: configuration, the
//! `train`, `eval`, `audit` and `bench` subcommands, and process exit codes.

pub mod audit;
pub mod bench;
pub mod config;
pub mod eval;
pub mod train;

use adagan::Error;

pub use config::{DatasetSpec, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
/// Invalid configuration, arguments or architecture.
pub const EXIT_CONFIG: i32 = 2;
/// I/O, format or other runtime failure.
pub const EXIT_RUNTIME: i32 = 3;
/// Training produced a non-finite loss or gradient.
pub const EXIT_DIVERGENCE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Capacity { .. } => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_RUNTIME,
    }
}
