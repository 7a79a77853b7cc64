//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 32×32 planar R, G, B planes.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

/// Decodes records to HWC values in `[−1, 1]`; labels are read and dropped.
/// `base_offset` is added to error offsets.
pub fn parse_cifar10(bytes: &[u8], base_offset: u64) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        return Err(Error::Format {
            offset: base_offset + whole as u64,
            reason: format!(
                "{} bytes is not a multiple of the {CIFAR_RECORD_BYTES}-byte record size; trailing partial record",
                bytes.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(bytes.len() / CIFAR_RECORD_BYTES * 3 * PLANE);
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::Format {
                offset: base_offset + (i * CIFAR_RECORD_BYTES) as u64,
                reason: format!("label byte {label} is not a CIFAR-10 class"),
            });
        }
        let pixels = &record[1..];
        for p in 0..PLANE {
            for c in 0..3 {
                out.push(pixels[c * PLANE + p] as f32 / 127.5 - 1.0);
            }
        }
    }
    Ok(out)
}

pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut data = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path.as_ref())?;
        data.extend(parse_cifar10(&bytes, 0).map_err(|e| match e {
            Error::Format { offset, reason } => Error::Format {
                offset,
                reason: format!("{}: {reason}", path.as_ref().display()),
            },
            other => other,
        })?);
    }
    let n = data.len() / (3 * PLANE);
    if n == 0 {
        return Err(Error::Format {
            offset: 0,
            reason: "no CIFAR-10 records found".into(),
        });
    }
    Dataset::new("cifar10", Tensor::new(&[n, SIDE, SIDE, 3], data)?)
}
