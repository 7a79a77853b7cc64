//! Local (per-pixel kernel) convolution with "same" zero padding.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct LocalGeometry {
    n: usize,
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
}

impl LocalGeometry {
    fn c_ad(&self) -> usize {
        self.k * self.k * self.c_in * self.c_out
    }

    #[inline]
    fn source(&self, o: usize, d: usize, extent: usize) -> Option<usize> {
        let pos = (o + d) as isize - ((self.k - 1) / 2) as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

fn local_geometry(x: &Tensor, w_ad: &Tensor, b_ad: &Tensor, k: usize, c_out: usize) -> Result<LocalGeometry> {
    let [n, h, w, c_in] = x.dims4()?;
    if k == 0 || k.is_multiple_of(2) || c_out == 0 {
        return Err(Error::Config(format!(
            "local conv needs an odd kernel and positive C_out, got K={k} C_out={c_out}"
        )));
    }
    let g = LocalGeometry { n, h, w, c_in, c_out, k };
    if w_ad.shape() != [n, h, w, g.c_ad()] {
        return Err(Error::dim("local_conv weights", x.shape(), w_ad.shape()));
    }
    if b_ad.shape() != [n, h, w, c_out] {
        return Err(Error::dim("local_conv biases", x.shape(), b_ad.shape()));
    }
    Ok(g)
}

fn forward(x: &[f32], w_ad: &[f32], b_ad: &[f32], g: &LocalGeometry) -> Vec<f32> {
    let (ci, co, cad) = (g.c_in, g.c_out, g.c_ad());
    let mut out = b_ad.to_vec();
    for n in 0..g.n {
        for i in 0..g.h {
            for j in 0..g.w {
                let pix = (n * g.h + i) * g.w + j;
                let o = &mut out[pix * co..][..co];
                let kernel = &w_ad[pix * cad..][..cad];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let xs = &x[((n * g.h + ii) * g.w + jj) * ci..][..ci];
                        let tap = &kernel[(di * g.k + dj) * ci * co..][..ci * co];
                        for (&xv, row) in xs.iter().zip(tap.chunks_exact(co)) {
                            for (o, &wv) in o.iter_mut().zip(row) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Eight independent partial sums so the reduction vectorizes.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Returns `(dx, dw_ad)`; `db_ad` is the incoming gradient itself.
fn backward(
    x: &[f32],
    w_ad: &[f32],
    grad: &[f32],
    g: &LocalGeometry,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let (ci, co, cad) = (g.c_in, g.c_out, g.c_ad());
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = want_dw.then(|| vec![0.0; w_ad.len()]);
    for n in 0..g.n {
        for i in 0..g.h {
            for j in 0..g.w {
                let pix = (n * g.h + i) * g.w + j;
                let go = &grad[pix * co..][..co];
                for di in 0..g.k {
                    let Some(ii) = g.source(i, di, g.h) else { continue };
                    for dj in 0..g.k {
                        let Some(jj) = g.source(j, dj, g.w) else { continue };
                        let xo = ((n * g.h + ii) * g.w + jj) * ci;
                        let to = pix * cad + (di * g.k + dj) * ci * co;
                        if let Some(dx) = dx.as_mut() {
                            let tap = &w_ad[to..][..ci * co];
                            for (d, row) in dx[xo..][..ci].iter_mut().zip(tap.chunks_exact(co)) {
                                *d += dot(row, go);
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            let tap = &mut dw[to..][..ci * co];
                            for (&xv, row) in x[xo..][..ci].iter().zip(tap.chunks_exact_mut(co)) {
                                for (d, &gv) in row.iter_mut().zip(go) {
                                    *d = xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}

/// Plain-tensor local convolution, no tape.
pub fn local_conv_forward(x: &Tensor, w_ad: &Tensor, b_ad: &Tensor, k: usize, c_out: usize) -> Result<Tensor> {
    let g = local_geometry(x, w_ad, b_ad, k, c_out)?;
    Ok(Tensor::from_parts(
        vec![g.n, g.h, g.w, c_out],
        forward(x.data(), w_ad.data(), b_ad.data(), &g),
    ))
}

impl Tape {
    /// Applies the kernel stored at each pixel of `w_ad: [N,H,W,K²·C_in·C_out]`
    /// to the `K×K` neighbourhood of that pixel in `x: [N,H,W,C_in]`, then adds
    /// `b_ad: [N,H,W,C_out]`.
    pub fn local_conv(&self, x: Var, w_ad: Var, b_ad: Var, k: usize, c_out: usize) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w_ad), self.value(b_ad));
        let g = local_geometry(&xv, &wv, &bv, k, c_out)?;
        let out = forward(xv.data(), wv.data(), bv.data(), &g);
        Ok(self.push(
            Tensor::from_parts(vec![g.n, g.h, g.w, c_out], out),
            &[x, w_ad, b_ad],
            Box::new(move |grad, mask| {
                let (dx, dw) = backward(xv.data(), wv.data(), grad.data(), &g, mask[0], mask[1]);
                vec![
                    dx.map(|d| Tensor::from_parts(xv.shape().to_vec(), d)),
                    dw.map(|d| Tensor::from_parts(wv.shape().to_vec(), d)),
                    mask[2].then(|| grad.clone()),
                ]
            }),
        ))
    }
}

/// Free-function form of [`Tape::local_conv`].
pub fn local_conv(tape: &Tape, x: Var, w_ad: Var, b_ad: Var, k: usize, c_out: usize) -> Result<Var> {
    tape.local_conv(x, w_ad, b_ad, k, c_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_gaussian, Rng};
    use crate::testing::{brute_local_conv, check_gradients, GradCheck};

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
        sample_gaussian(rng, shape).unwrap()
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = Rng::new(5);
        for (k, ci, co) in [(1, 2, 3), (3, 2, 3), (3, 1, 1), (5, 3, 2)] {
            let x = random(&mut rng, &[2, 5, 4, ci]);
            let w = random(&mut rng, &[2, 5, 4, k * k * ci * co]);
            let b = random(&mut rng, &[2, 5, 4, co]);
            let fast = local_conv_forward(&x, &w, &b, k, co).unwrap();
            let slow = brute_local_conv(&x, &w, &b, k, co);
            assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-5, "k={k} ci={ci} co={co}");
        }
    }

    #[test]
    fn zero_weights_leave_bias() {
        let mut rng = Rng::new(1);
        let x = random(&mut rng, &[1, 3, 3, 2]);
        let w = Tensor::zeros(&[1, 3, 3, 36]).unwrap();
        let b = random(&mut rng, &[1, 3, 3, 2]);
        let out = local_conv_forward(&x, &w, &b, 3, 2).unwrap();
        assert_eq!(out.data(), b.data());
    }

    #[test]
    fn wrong_weight_channels_rejected() {
        let x = Tensor::zeros(&[1, 3, 3, 2]).unwrap();
        let w = Tensor::zeros(&[1, 3, 3, 35]).unwrap();
        let b = Tensor::zeros(&[1, 3, 3, 2]).unwrap();
        assert!(matches!(local_conv_forward(&x, &w, &b, 3, 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(9);
        let inputs = [
            random(&mut rng, &[2, 4, 3, 2]),
            random(&mut rng, &[2, 4, 3, 9 * 2 * 3]),
            random(&mut rng, &[2, 4, 3, 3]),
        ];
        let report = check_gradients(
            &inputs,
            |t, v| t.local_conv(v[0], v[1], v[2], 3, 3),
            GradCheck::new(1e-2, 1e-3).samples(40),
            &mut rng,
        )
        .unwrap();
        assert!(report.passed(1e-3), "{report:?}");
    }
}
