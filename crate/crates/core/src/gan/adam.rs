use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept for trainable entries only.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    /// `(first, second)` moments indexed like the store's entries.
    moments: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let moments = store
            .entries()
            .iter()
            .map(|e| e.trainable.then(|| (vec![0.0; e.value.numel()], vec![0.0; e.value.numel()])))
            .collect();
        Adam {
            config,
            step: 0,
            moments,
        }
    }

    /// One update. `grads[i]` belongs to entry `i`; `None` counts as zero.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], iteration: u64) -> Result<()> {
        if grads.len() != self.moments.len() || store.len() != self.moments.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} entries but got {} gradients for {} parameters",
                self.moments.len(),
                grads.len(),
                store.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::Divergence {
                        iteration,
                        what: format!("non-finite gradient for {}", store.entries()[i].name),
                    });
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - (c.beta1 as f64).powi(t);
        let correction2 = 1.0 - (c.beta2 as f64).powi(t);
        let step_size = (c.lr as f64 / correction1) as f32;
        let sqrt_c2 = correction2.sqrt() as f32;
        let ids: Vec<ParamId> = store.ids().collect();
        for (id, (slot, g)) in ids.into_iter().zip(self.moments.iter_mut().zip(grads)) {
            let Some((m, v)) = slot.as_mut() else { continue };
            let mut p = store.get(id).data().to_vec();
            let zeros;
            let g = match g {
                Some(g) => g.data(),
                None => {
                    zeros = vec![0.0; p.len()];
                    &zeros
                }
            };
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= step_size * *m / (v.sqrt() / sqrt_c2 + c.eps);
            }
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::new(&shape, p)?)?;
        }
        Ok(())
    }

    /// Moment tensors by entry name, for checkpoints.
    pub fn state_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (e, slot) in store.entries().iter().zip(&self.moments) {
            if let Some((m, v)) = slot {
                let shape = e.value.shape();
                out.push((format!("{}.m", e.name), Tensor::new(shape, m.clone()).expect("moment shape")));
                out.push((format!("{}.v", e.name), Tensor::new(shape, v.clone()).expect("moment shape")));
            }
        }
        out
    }

    /// Restores moments written by [`Adam::state_tensors`].
    pub fn load_state(&mut self, store: &ParamStore, step: u64, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
        for (e, slot) in store.entries().iter().zip(self.moments.iter_mut()) {
            let Some((m, v)) = slot.as_mut() else { continue };
            for (suffix, dst) in [("m", m), ("v", v)] {
                let key = format!("{}.{suffix}", e.name);
                let t = lookup(&key).ok_or_else(|| Error::Format {
                    offset: 0,
                    reason: format!("checkpoint lacks optimizer state {key}"),
                })?;
                if t.shape() != e.value.shape() {
                    return Err(Error::dim("optimizer state", e.value.shape(), t.shape()));
                }
                dst.copy_from_slice(t.data());
            }
        }
        self.step = step;
        Ok(())
    }
}
