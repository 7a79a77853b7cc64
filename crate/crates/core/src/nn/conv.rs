//! 2-D cross-correlation on NHWC tensors with HWIO weights.
//!
//! The dense convolution lowers to im2col + GEMM. The depthwise variant
//! (depth multiplier 1) runs direct loops since its cost is tiny.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::ops::channel_sums;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvOpts {
    pub stride: usize,
    pub pad: usize,
}

impl ConvOpts {
    /// Stride 1 with `(k - 1) / 2` zero padding; preserves H and W for odd `k`.
    pub fn same(k: usize) -> Self {
        ConvOpts {
            stride: 1,
            pad: (k - 1) / 2,
        }
    }

    pub fn strided(stride: usize, pad: usize) -> Self {
        ConvOpts { stride, pad }
    }
}

/// `floor((size + 2·pad − k) / stride) + 1`.
pub fn conv_out_size(size: usize, k: usize, opts: ConvOpts) -> Result<usize> {
    let padded = size + 2 * opts.pad;
    if opts.stride == 0 || k == 0 || padded < k {
        return Err(Error::Contract(format!(
            "kernel {k} with pad {} and stride {} does not fit input extent {size}",
            opts.pad, opts.stride
        )));
    }
    Ok((padded - k) / opts.stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    ho: usize,
    wo: usize,
    opts: ConvOpts,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    fn patch(&self) -> usize {
        self.k * self.k * self.c
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.opts.stride == 1 && self.opts.pad == 0
    }

    /// Input row/col for output `o` and kernel tap `d`, if inside the image.
    #[inline]
    fn source(&self, o: usize, d: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.opts.stride + d) as isize - self.opts.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

fn im2col(x: &[f32], g: &Geometry) -> Vec<f32> {
    let patch = g.patch();
    let mut cols = vec![0.0; g.rows() * patch];
    for n in 0..g.n {
        for i in 0..g.ho {
            for j in 0..g.wo {
                let row = &mut cols[((n * g.ho + i) * g.wo + j) * patch..][..patch];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let src = &x[((n * g.h + ii) * g.w + jj) * g.c..][..g.c];
                        row[(di * g.k + dj) * g.c..][..g.c].copy_from_slice(src);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], g: &Geometry) -> Vec<f32> {
    let patch = g.patch();
    let mut x = vec![0.0; g.n * g.h * g.w * g.c];
    for n in 0..g.n {
        for i in 0..g.ho {
            for j in 0..g.wo {
                let row = &cols[((n * g.ho + i) * g.wo + j) * patch..][..patch];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let dst = &mut x[((n * g.h + ii) * g.w + jj) * g.c..][..g.c];
                        for (d, s) in dst.iter_mut().zip(&row[(di * g.k + dj) * g.c..][..g.c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    x
}

/// Shape checks shared by the tape op and the plain-tensor kernel.
fn conv_geometry(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, opts: ConvOpts) -> Result<(Geometry, usize)> {
    let [n, h, wd, c] = x.dims4()?;
    let (k, cout) = match *w.shape() {
        [k1, k2, ci, co] if k1 == k2 && ci == c => (k1, co),
        _ => return Err(Error::dim("conv2d", x.shape(), w.shape())),
    };
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::dim("conv2d bias", w.shape(), b.shape()));
        }
    }
    let ho = conv_out_size(h, k, opts)?;
    let wo = conv_out_size(wd, k, opts)?;
    Ok((
        Geometry {
            n,
            h,
            w: wd,
            c,
            k,
            ho,
            wo,
            opts,
        },
        cout,
    ))
}

fn conv_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, g: &Geometry, cout: usize) -> (Tensor, Tensor) {
    let cols = if g.is_pointwise() {
        x.clone()
    } else {
        Tensor::from_parts(vec![g.rows(), g.patch()], im2col(x.data(), g))
    };
    let mut out = vec![0.0; g.rows() * cout];
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(cout) {
            row.copy_from_slice(b.data());
        }
    }
    gemm(g.rows(), g.patch(), cout, cols.data(), false, w.data(), false, &mut out, bias.is_some());
    (Tensor::from_parts(vec![g.n, g.ho, g.wo, cout], out), cols)
}

/// Plain-tensor convolution, no tape.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, opts: ConvOpts) -> Result<Tensor> {
    let (g, cout) = conv_geometry(x, w, bias, opts)?;
    Ok(conv_forward(x, w, bias, &g, cout).0)
}

impl Tape {
    /// Cross-correlation of `x: [N,H,W,C_in]` with `w: [K,K,C_in,C_out]` plus optional bias.
    pub fn conv2d(&self, x: Var, w: Var, bias: Option<Var>, opts: ConvOpts) -> Result<Var> {
        self.conv2d_impl(x, w, bias, opts, false)
    }

    /// `relu(conv2d(..))` as one node, sparing a full-size intermediate.
    pub fn conv2d_relu(&self, x: Var, w: Var, bias: Option<Var>, opts: ConvOpts) -> Result<Var> {
        self.conv2d_impl(x, w, bias, opts, true)
    }

    fn conv2d_impl(&self, x: Var, w: Var, bias: Option<Var>, opts: ConvOpts, relu: bool) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let bv = bias.map(|b| self.value(b));
        let (g, cout) = conv_geometry(&xv, &wv, bv.as_ref(), opts)?;
        let (mut out, cols) = conv_forward(&xv, &wv, bv.as_ref(), &g, cout);
        if relu {
            let shape = out.shape().to_vec();
            let mut data = out.into_vec();
            data.iter_mut().for_each(|v| *v = v.max(0.0));
            out = Tensor::from_parts(shape, data);
        }
        let kept = relu.then(|| out.clone());
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let x_shape = xv.shape().to_vec();
        let w_shape = wv.shape().to_vec();
        Ok(self.push(
            out,
            &inputs,
            Box::new(move |grad, mask| {
                let masked;
                let grad = match &kept {
                    Some(y) => {
                        masked = grad.zip_map(y, |g, y| if y > 0.0 { g } else { 0.0 }).expect("same shape");
                        &masked
                    }
                    None => grad,
                };
                let rows = g.rows();
                let patch = g.patch();
                let gx = mask[0].then(|| {
                    let mut dcols = vec![0.0; rows * patch];
                    gemm(rows, cout, patch, grad.data(), false, wv.data(), true, &mut dcols, false);
                    let dx = if g.is_pointwise() { dcols } else { col2im(&dcols, &g) };
                    Tensor::from_parts(x_shape.clone(), dx)
                });
                let gw = mask[1].then(|| {
                    let mut dw = vec![0.0; patch * cout];
                    gemm(patch, rows, cout, cols.data(), true, grad.data(), false, &mut dw, false);
                    Tensor::from_parts(w_shape.clone(), dw)
                });
                let mut out = vec![gx, gw];
                if mask.len() == 3 {
                    out.push(mask[2].then(|| Tensor::from_parts(vec![cout], channel_sums(grad.data(), cout))));
                }
                out
            }),
        ))
    }

    /// Depthwise convolution (one filter per channel) of `x: [N,H,W,C]` with
    /// `w: [K,K,C]`, stride 1 and "same" zero padding.
    pub fn depthwise_conv2d(&self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let [n, h, wd, c] = xv.dims4()?;
        let k = match *wv.shape() {
            [k1, k2, ci] if k1 == k2 && ci == c && k1 % 2 == 1 => k1,
            _ => return Err(Error::dim("depthwise_conv2d", xv.shape(), wv.shape())),
        };
        let g = Geometry {
            n,
            h,
            w: wd,
            c,
            k,
            ho: h,
            wo: wd,
            opts: ConvOpts::same(k),
        };
        let out = depthwise_forward(xv.data(), wv.data(), &g);
        Ok(self.push(
            Tensor::from_parts(xv.shape().to_vec(), out),
            &[x, w],
            Box::new(move |grad, mask| {
                let (dx, dw) = depthwise_backward(xv.data(), wv.data(), grad.data(), &g, mask[0], mask[1]);
                vec![
                    dx.map(|d| Tensor::from_parts(xv.shape().to_vec(), d)),
                    dw.map(|d| Tensor::from_parts(wv.shape().to_vec(), d)),
                ]
            }),
        ))
    }
}

fn depthwise_forward(x: &[f32], w: &[f32], g: &Geometry) -> Vec<f32> {
    let c = g.c;
    let mut out = vec![0.0; g.n * g.h * g.w * c];
    for n in 0..g.n {
        for i in 0..g.h {
            for j in 0..g.w {
                let o = &mut out[((n * g.h + i) * g.w + j) * c..][..c];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let xs = &x[((n * g.h + ii) * g.w + jj) * c..][..c];
                        let ws = &w[(di * g.k + dj) * c..][..c];
                        for ((o, &xv), &wv) in o.iter_mut().zip(xs).zip(ws) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

fn depthwise_backward(
    x: &[f32],
    w: &[f32],
    grad: &[f32],
    g: &Geometry,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let c = g.c;
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = want_dw.then(|| vec![0.0; w.len()]);
    for n in 0..g.n {
        for i in 0..g.h {
            for j in 0..g.w {
                let go = &grad[((n * g.h + i) * g.w + j) * c..][..c];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let xo = ((n * g.h + ii) * g.w + jj) * c;
                        let wo = (di * g.k + dj) * c;
                        if let Some(dx) = dx.as_mut() {
                            for ch in 0..c {
                                dx[xo + ch] += go[ch] * w[wo + ch];
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            for ch in 0..c {
                                dw[wo + ch] += go[ch] * x[xo + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}
