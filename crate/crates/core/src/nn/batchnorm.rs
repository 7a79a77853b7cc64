//! Batch normalization over the `(N, H, W)` axes of NHWC feature maps.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Tensor,
    /// Biased (population) variance, as used for normalization.
    pub var: Tensor,
    /// Number of values reduced per channel.
    pub count: usize,
}

impl BatchStats {
    /// `running ← momentum·running + (1 − momentum)·batch`, with the unbiased
    /// variance estimate for the running variance.
    pub fn update_running(&self, mean: &Tensor, var: &Tensor, momentum: f32) -> Result<(Tensor, Tensor)> {
        let m = self.count as f32;
        let unbias = m / (m - 1.0);
        let new_mean = mean.zip_map(&self.mean, |r, b| momentum * r + (1.0 - momentum) * b)?;
        let new_var = var.zip_map(&self.var, |r, b| momentum * r + (1.0 - momentum) * b * unbias)?;
        Ok((new_mean, new_var))
    }
}

fn split_channels(x: &Tensor) -> Result<(usize, usize)> {
    let c = match x.rank() {
        2 | 4 => *x.shape().last().unwrap(),
        _ => {
            return Err(Error::Shape {
                shape: x.shape().to_vec(),
                reason: "batch norm expects [N, C] or [N, H, W, C]".into(),
            })
        }
    };
    Ok((x.numel() / c, c))
}

impl Tape {
    /// Training-mode batch norm: normalizes with the batch statistics, which
    /// are differentiated through and returned for the running-average update.
    pub fn batch_norm_train(&self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<(Var, BatchStats)> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let (m, c) = split_channels(&xv)?;
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::dim("batch_norm", xv.shape(), gv.shape()));
        }
        if m < 2 {
            return Err(Error::Contract(format!(
                "training-mode batch norm needs at least 2 values per channel, got {m}"
            )));
        }
        let mut mean = vec![0.0f64; c];
        for row in xv.data().chunks_exact(c) {
            for (a, &v) in mean.iter_mut().zip(row) {
                *a += v as f64;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let mut var = vec![0.0f64; c];
        for row in xv.data().chunks_exact(c) {
            for ((a, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *a += (v as f64 - mu).powi(2);
            }
        }
        var.iter_mut().for_each(|a| *a /= m as f64);
        let inv_std: Vec<f32> = var.iter().map(|v| (1.0 / (v + eps as f64).sqrt()) as f32).collect();
        let mean32: Vec<f32> = mean.iter().map(|&v| v as f32).collect();

        let mut xhat = vec![0.0f32; xv.numel()];
        let mut out = vec![0.0f32; xv.numel()];
        for ((xr, hr), or) in xv
            .data()
            .chunks_exact(c)
            .zip(xhat.chunks_exact_mut(c))
            .zip(out.chunks_exact_mut(c))
        {
            for ch in 0..c {
                let h = (xr[ch] - mean32[ch]) * inv_std[ch];
                hr[ch] = h;
                or[ch] = gv.data()[ch] * h + bv.data()[ch];
            }
        }
        let stats = BatchStats {
            mean: Tensor::from_parts(vec![c], mean32),
            var: Tensor::from_parts(vec![c], var.iter().map(|&v| v as f32).collect()),
            count: m,
        };
        let shape = xv.shape().to_vec();
        let y = self.push(
            Tensor::from_parts(shape.clone(), out),
            &[x, gamma, beta],
            Box::new(move |g, mask| {
                let gd = g.data();
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for (gr, hr) in gd.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        sum_g[ch] += gr[ch] as f64;
                        sum_gx[ch] += (gr[ch] * hr[ch]) as f64;
                    }
                }
                let dx = mask[0].then(|| {
                    let mf = m as f64;
                    let mut dx = vec![0.0f32; gd.len()];
                    for ((dr, gr), hr) in dx.chunks_exact_mut(c).zip(gd.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                        for ch in 0..c {
                            let gamma = gv.data()[ch] as f64;
                            let v = gamma * inv_std[ch] as f64 / mf
                                * (mf * gr[ch] as f64 - sum_g[ch] - hr[ch] as f64 * sum_gx[ch]);
                            dr[ch] = v as f32;
                        }
                    }
                    Tensor::from_parts(shape.clone(), dx)
                });
                let dgamma = mask[1].then(|| Tensor::from_parts(vec![c], sum_gx.iter().map(|&v| v as f32).collect()));
                let dbeta = mask[2].then(|| Tensor::from_parts(vec![c], sum_g.iter().map(|&v| v as f32).collect()));
                vec![dx, dgamma, dbeta]
            }),
        );
        Ok((y, stats))
    }

    /// Inference-mode batch norm: a per-channel affine map built from the
    /// running statistics.
    pub fn batch_norm_eval(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        eps: f32,
    ) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let (_, c) = split_channels(&xv)?;
        if gv.shape() != [c] || bv.shape() != [c] || running_mean.shape() != [c] || running_var.shape() != [c] {
            return Err(Error::dim("batch_norm", xv.shape(), gv.shape()));
        }
        let inv_std: Vec<f32> = running_var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let rm = running_mean.data().to_vec();
        let mut out = vec![0.0f32; xv.numel()];
        for (xr, or) in xv.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            for ch in 0..c {
                or[ch] = gv.data()[ch] * (xr[ch] - rm[ch]) * inv_std[ch] + bv.data()[ch];
            }
        }
        let shape = xv.shape().to_vec();
        Ok(self.push(
            Tensor::from_parts(shape.clone(), out),
            &[x, gamma, beta],
            Box::new(move |g, mask| {
                let gd = g.data();
                let dx = mask[0].then(|| {
                    let mut dx = vec![0.0f32; gd.len()];
                    for (dr, gr) in dx.chunks_exact_mut(c).zip(gd.chunks_exact(c)) {
                        for ch in 0..c {
                            dr[ch] = gr[ch] * gv.data()[ch] * inv_std[ch];
                        }
                    }
                    Tensor::from_parts(shape.clone(), dx)
                });
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                if mask[1] || mask[2] {
                    for (gr, xr) in gd.chunks_exact(c).zip(xv.data().chunks_exact(c)) {
                        for ch in 0..c {
                            dgamma[ch] += gr[ch] * (xr[ch] - rm[ch]) * inv_std[ch];
                            dbeta[ch] += gr[ch];
                        }
                    }
                }
                vec![
                    dx,
                    mask[1].then(|| Tensor::from_parts(vec![c], dgamma)),
                    mask[2].then(|| Tensor::from_parts(vec![c], dbeta)),
                ]
            }),
        ))
    }
}
