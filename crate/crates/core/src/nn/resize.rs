//! Nearest-neighbour 2× upsampling.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

pub fn resize_nn_2x_forward(x: &Tensor) -> Result<Tensor> {
    let [n, h, w, c] = x.dims4()?;
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; n * ho * wo * c];
    let src = x.data();
    for b in 0..n {
        for i in 0..ho {
            for j in 0..wo {
                let s = ((b * h + i / 2) * w + j / 2) * c;
                let d = ((b * ho + i) * wo + j) * c;
                out[d..d + c].copy_from_slice(&src[s..s + c]);
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, ho, wo, c], out))
}

impl Tape {
    /// Replicates every pixel into a 2×2 block: `[N,H,W,C] → [N,2H,2W,C]`.
    pub fn resize_nn_2x(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [n, h, w, c] = xv.dims4()?;
        let out = resize_nn_2x_forward(&xv)?;
        Ok(self.push(
            out,
            &[x],
            Box::new(move |g, _| {
                let (ho, wo) = (2 * h, 2 * w);
                let mut dx = vec![0.0; n * h * w * c];
                let gd = g.data();
                for b in 0..n {
                    for i in 0..ho {
                        for j in 0..wo {
                            let s = ((b * ho + i) * wo + j) * c;
                            let d = ((b * h + i / 2) * w + j / 2) * c;
                            for ch in 0..c {
                                dx[d + ch] += gd[s + ch];
                            }
                        }
                    }
                }
                vec![Some(Tensor::from_parts(vec![n, h, w, c], dx))]
            }),
        ))
    }
}
