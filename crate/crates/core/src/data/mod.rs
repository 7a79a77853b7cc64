//! Datasets, the shuffled batch iterator, and image output.

mod cifar;
mod pixmap;
mod synth;

pub use cifar::{load_cifar10_binary, parse_cifar10, CIFAR_RECORD_BYTES};
pub use pixmap::{decode_p6, encode_p6, quantize, render_grid, write_sample_grid, GRID_GUTTER};
pub use synth::{detect_shape, synth_dataset, synth_shapes_labeled, ShapeKind, SynthKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Images `[N, M, M, 3]` with values in `[−1, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub images: Tensor,
}

impl Dataset {
    pub fn new(name: impl Into<String>, images: Tensor) -> Result<Self> {
        let [_, h, w, c] = images.dims4()?;
        if h != w || c != 3 {
            return Err(Error::Shape {
                shape: images.shape().to_vec(),
                reason: "dataset images must be square RGB".into(),
            });
        }
        if let Some(v) = images.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("dataset value {v} outside [-1, 1]")));
        }
        Ok(Dataset {
            name: name.into(),
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self) -> usize {
        self.images.shape()[1]
    }

    /// First `n` images (or all of them).
    pub fn take(&self, n: usize) -> Result<Dataset> {
        Ok(Dataset {
            name: self.name.clone(),
            images: self.images.batch_slice(0, n.min(self.len()))?,
        })
    }
}

/// Position of a [`BatchIter`], enough to resume it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCursor {
    pub seed: u64,
    pub epoch: u64,
    pub pos: usize,
}

/// Draws batches from a fresh seeded permutation every epoch. A batch that
/// runs past the end of an epoch continues into the next one.
#[derive(Clone, Debug)]
pub struct BatchIter {
    cursor: BatchCursor,
    perm: Vec<usize>,
}

/// Keeps permutation streams apart from the other streams of a run.
const PERMUTATION_STREAM_BASE: u64 = 1 << 32;

fn permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::with_stream(seed, PERMUTATION_STREAM_BASE + epoch).shuffle(&mut perm);
    perm
}

impl BatchIter {
    pub fn new(seed: u64, dataset_len: usize) -> Self {
        BatchIter::resume(
            BatchCursor {
                seed,
                epoch: 0,
                pos: 0,
            },
            dataset_len,
        )
    }

    pub fn resume(cursor: BatchCursor, dataset_len: usize) -> Self {
        BatchIter {
            cursor,
            perm: permutation(cursor.seed, cursor.epoch, dataset_len),
        }
    }

    pub fn cursor(&self) -> BatchCursor {
        self.cursor
    }

    /// Dataset indices of the next batch.
    pub fn next_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if self.perm.is_empty() {
            return Err(Error::Contract("cannot draw batches from an empty dataset".into()));
        }
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor.pos == self.perm.len() {
                self.cursor.epoch += 1;
                self.cursor.pos = 0;
                self.perm = permutation(self.cursor.seed, self.cursor.epoch, self.perm.len());
            }
            let take = (batch - out.len()).min(self.perm.len() - self.cursor.pos);
            out.extend_from_slice(&self.perm[self.cursor.pos..self.cursor.pos + take]);
            self.cursor.pos += take;
        }
        Ok(out)
    }

    pub fn next_batch(&mut self, dataset: &Dataset, batch: usize) -> Result<Tensor> {
        let idx = self.next_indices(batch)?;
        dataset.images.gather_batch(&idx)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn every_index_once_per_epoch(seed in any::<u64>(), n in 1usize..200, batch in 1usize..50) {
            let mut it = BatchIter::new(seed, n);
            let mut seen = Vec::new();
            while seen.len() < 3 * n {
                seen.extend(it.next_indices(batch).unwrap());
            }
            for epoch in seen[..3 * n].chunks(n) {
                let mut e = epoch.to_vec();
                e.sort_unstable();
                prop_assert_eq!(e, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn resume_continues_identically(seed in any::<u64>(), n in 1usize..100, split in 0usize..20) {
            let mut a = BatchIter::new(seed, n);
            for _ in 0..split {
                a.next_indices(7).unwrap();
            }
            let mut b = BatchIter::resume(a.cursor(), n);
            for _ in 0..10 {
                prop_assert_eq!(a.next_indices(7).unwrap(), b.next_indices(7).unwrap());
            }
        }
    }

    #[test]
    fn epochs_are_reshuffled() {
        let mut it = BatchIter::new(3, 50);
        let a = it.next_indices(50).unwrap();
        let b = it.next_indices(50).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn out_of_range_values_rejected() {
        let t = Tensor::full(&[1, 2, 2, 3], 1.5).unwrap();
        assert!(Dataset::new("x", t).is_err());
    }
}
