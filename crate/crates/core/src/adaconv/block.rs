use super::{check_param_shapes, AdaConvParams, AdaConvSpec, Variant, WeightPath};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::ConvOpts;

fn check_input(tape: &Tape, x: Var, spec: &AdaConvSpec) -> Result<[usize; 4]> {
    let shape = tape.shape(x);
    match *shape.as_slice() {
        [n, h, w, c] if c == spec.c_in => Ok([n, h, w, c]),
        _ => Err(Error::dim("adaconv input", &shape, &[0, 0, 0, spec.c_in])),
    }
}

/// Regresses the per-pixel kernels `W_adaptive: [N,H,W,C_adaptive]`.
///
/// Checks the byte budget before anything is allocated.
pub fn regress_weights(tape: &Tape, x: Var, p: &AdaConvParams<Var>, spec: &AdaConvSpec) -> Result<Var> {
    let [n, h, w, _] = check_input(tape, x, spec)?;
    check_param_shapes(tape, p, spec)?;
    spec.check_budget(n, h, w)?;
    match (&p.weight_path, spec.variant) {
        (WeightPath::Naive { w_ww }, Variant::Naive) => {
            tape.conv2d_relu(x, *w_ww, Some(p.b_wb), ConvOpts::same(spec.k_adaptive))
        }
        (WeightPath::Separable { depthwise, pointwise }, Variant::Separable) => {
            let mixed = tape.depthwise_conv2d(x, *depthwise)?;
            tape.conv2d_relu(mixed, *pointwise, Some(p.b_wb), ConvOpts::same(1))
        }
        _ => Err(Error::Config("parameter variant does not match spec".into())),
    }
}

/// Regresses the per-pixel biases `b_adaptive: [N,H,W,C_out]` (linear).
pub fn regress_biases(tape: &Tape, x: Var, p: &AdaConvParams<Var>, spec: &AdaConvSpec) -> Result<Var> {
    check_input(tape, x, spec)?;
    check_param_shapes(tape, p, spec)?;
    tape.conv2d(x, p.w_bw, Some(p.b_bb), ConvOpts::same(spec.k_adaptive))
}

/// Full block: regress kernels and biases from `x`, then apply them locally.
pub fn adaconv_block(tape: &Tape, x: Var, p: &AdaConvParams<Var>, spec: &AdaConvSpec) -> Result<Var> {
    let w_ad = regress_weights(tape, x, p, spec)?;
    let b_ad = regress_biases(tape, x, p, spec)?;
    tape.local_conv(x, w_ad, b_ad, spec.k_filter, spec.c_out)
}
