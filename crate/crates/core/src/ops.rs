//! Elementwise, reduction and matrix ops recorded on a [`Tape`].

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn is_scalar(t: &Tensor) -> bool {
    t.rank() == 0
}

/// Sums `g` down to a scalar when the operand was broadcast.
fn reduce_to(g: Tensor, target: &Tensor) -> Tensor {
    if is_scalar(target) && !is_scalar(&g) {
        Tensor::scalar(g.sum() as f32)
    } else {
        g
    }
}

impl Tape {
    fn unary(&self, x: Var, f: impl Fn(f32) -> f32, df: impl Fn(f32, f32) -> f32 + 'static) -> Var {
        let xv = self.value(x);
        let out = xv.map(f);
        let saved_out = out.clone();
        self.push(
            out,
            &[x],
            Box::new(move |g, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .zip(saved_out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    /// `max(x, 0)`; the derivative at exactly zero is taken as zero.
    pub fn relu(&self, x: Var) -> Var {
        self.unary(x, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `max(x, slope·x)` for `slope` in `[0, 1]`.
    pub fn leaky_relu(&self, x: Var, slope: f32) -> Var {
        self.unary(
            x,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, f32::tanh, |_, y| 1.0 - y * y)
    }

    pub fn softplus(&self, x: Var) -> Var {
        self.unary(x, softplus, |x, _| sigmoid(x))
    }

    pub fn scale(&self, x: Var, s: f32) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, &[x], Box::new(move |g, _| vec![Some(g.map(|v| v * s))]))
    }

    pub fn neg(&self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    fn binary_shapes(&self, op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
        if a.shape() == b.shape() || is_scalar(b) {
            Ok(a.shape().to_vec())
        } else if is_scalar(a) {
            Ok(b.shape().to_vec())
        } else {
            Err(Error::dim(op, a.shape(), b.shape()))
        }
    }

    /// Elementwise sum; operands must match exactly or one must be a scalar.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = self.binary_shapes("add", &av, &bv)?;
        let data = broadcast_zip(&av, &bv, |x, y| x + y);
        let out = Tensor::from_parts(shape, data);
        Ok(self.push(
            out,
            &[a, b],
            Box::new(move |g, _| {
                vec![
                    Some(reduce_to(g.clone(), &av)),
                    Some(reduce_to(g.clone(), &bv)),
                ]
            }),
        ))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// Elementwise product; operands must match exactly or one must be a scalar.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = self.binary_shapes("mul", &av, &bv)?;
        let out = Tensor::from_parts(shape.clone(), broadcast_zip(&av, &bv, |x, y| x * y));
        Ok(self.push(
            out,
            &[a, b],
            Box::new(move |g, mask| {
                let ga = mask[0].then(|| {
                    let d = broadcast_zip(g, &bv, |g, y| g * y);
                    reduce_to(Tensor::from_parts(shape.clone(), d), &av)
                });
                let gb = mask[1].then(|| {
                    let d = broadcast_zip(g, &av, |g, x| g * x);
                    reduce_to(Tensor::from_parts(shape.clone(), d), &bv)
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, x: Var) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let out = Tensor::scalar(xv.sum() as f32);
        self.push(
            out,
            &[x],
            Box::new(move |g, _| {
                let gv = g.data()[0];
                vec![Some(Tensor::from_parts(shape.clone(), vec![gv; shape.iter().product()]))]
            }),
        )
    }

    pub fn mean(&self, x: Var) -> Var {
        let n = self.value(x).numel() as f32;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let in_shape = xv.shape().to_vec();
        let out = xv.reshape(shape)?;
        Ok(self.push(
            out,
            &[x],
            Box::new(move |g, _| vec![Some(Tensor::from_parts(in_shape.clone(), g.data().to_vec()))]),
        ))
    }

    /// `[M, K] × [K, N] → [M, N]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = match (av.shape(), bv.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            _ => return Err(Error::dim("matmul", av.shape(), bv.shape())),
        };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            &[a, b],
            Box::new(move |g, mask| {
                let ga = mask[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, &mut d, false);
                    Tensor::from_parts(vec![m, k], d)
                });
                let gb = mask[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut d, false);
                    Tensor::from_parts(vec![k, n], d)
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Adds a `[C]` bias along the last axis.
    pub fn bias_add(&self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = *xv.shape().last().unwrap_or(&1);
        if bv.shape() != [c] || xv.rank() == 0 {
            return Err(Error::dim("bias_add", xv.shape(), bv.shape()));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (v, b) in row.iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(
            out,
            &[x, bias],
            Box::new(move |g, mask| {
                let gb = mask[1].then(|| Tensor::from_parts(vec![c], channel_sums(g.data(), c)));
                vec![Some(g.clone()), gb]
            }),
        ))
    }
}

/// Per-channel sums of a buffer whose last axis has `c` entries.
pub(crate) fn channel_sums(data: &[f32], c: usize) -> Vec<f32> {
    let mut acc = vec![0.0f32; c];
    for row in data.chunks_exact(c) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    if a.numel() == b.numel() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else if is_scalar(b) {
        let y = b.data()[0];
        a.data().iter().map(|&x| f(x, y)).collect()
    } else {
        let x = a.data()[0];
        b.data().iter().map(|&y| f(x, y)).collect()
    }
}
