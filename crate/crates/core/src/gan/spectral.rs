//! Spectral normalization by power iteration.
//!
//! A weight of any rank is viewed as the matrix `[C_out, rest]`, where
//! `C_out` is its last axis. Because weights are stored output-last, the
//! buffer is the row-major transpose of that matrix and no copy is needed.

use crate::error::{Error, Result};
use crate::rng::{sample_gaussian, Rng};
use crate::tensor::Tensor;

/// Lower clamp for the estimated spectral norm.
pub const SIGMA_EPSILON: f32 = 1e-12;

/// Power iterations per training forward pass.
pub const TRAIN_ITERATIONS: usize = 1;

/// Power iterations used by offline audits.
pub const AUDIT_ITERATIONS: usize = 20;

fn out_features(w: &Tensor) -> Result<usize> {
    match w.shape().last() {
        Some(&c) if w.rank() >= 2 => Ok(c),
        _ => Err(Error::Shape {
            shape: w.shape().to_vec(),
            reason: "spectral normalization needs a weight of rank at least 2".into(),
        }),
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Random unit vector with one entry per output feature of `w`.
pub fn init_u(w: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    let c = out_features(w)?;
    let g = sample_gaussian(rng, &[c])?;
    let mut u: Vec<f64> = g.data().iter().map(|&x| x as f64).collect();
    if normalize(&mut u) == 0.0 {
        u[0] = 1.0;
    }
    Tensor::new(&[c], u.into_iter().map(|x| x as f32).collect())
}

/// Runs `iterations` power-iteration steps from `u`, returning the updated
/// unit vector and the estimate `σ = uᵀ W v`.
pub fn power_iteration(w: &Tensor, u: &Tensor, iterations: usize) -> Result<(Tensor, f32)> {
    let cols = out_features(w)?;
    if u.shape() != [cols] {
        return Err(Error::dim("spectral norm vector", w.shape(), u.shape()));
    }
    let rows = w.numel() / cols;
    let a = w.data();
    let mut u: Vec<f64> = u.data().iter().map(|&x| x as f64).collect();
    let mut v = vec![0.0f64; rows];
    let mut sigma = 0.0f64;
    for _ in 0..iterations.max(1) {
        for (r, vr) in v.iter_mut().enumerate() {
            *vr = a[r * cols..][..cols].iter().zip(&u).map(|(&x, &y)| x as f64 * y).sum();
        }
        normalize(&mut v);
        let mut next = vec![0.0f64; cols];
        for (r, &vr) in v.iter().enumerate() {
            for (n, &x) in next.iter_mut().zip(&a[r * cols..][..cols]) {
                *n += x as f64 * vr;
            }
        }
        sigma = normalize(&mut next);
        if sigma > 0.0 {
            u = next;
        }
    }
    let mut sigma = sigma as f32;
    if sigma.is_nan() || sigma < SIGMA_EPSILON {
        log::warn!(
            "spectral norm of a {:?} weight is {sigma}; clamping to {SIGMA_EPSILON}",
            w.shape()
        );
        sigma = SIGMA_EPSILON;
    }
    let u = Tensor::new(&[cols], u.into_iter().map(|x| x as f32).collect())?;
    Ok((u, sigma))
}

/// `W / σ(W)` together with the updated vector and σ.
pub fn spectral_normalize(w: &Tensor, u: &Tensor, iterations: usize) -> Result<(Tensor, Tensor, f32)> {
    let (u, sigma) = power_iteration(w, u, iterations)?;
    let inv = 1.0 / sigma;
    Ok((w.map(|x| x * inv), u, sigma))
}
