//! Oracles for tests: central finite differences and brute-force kernels.
//!
//! Nothing here calls a backward closure; gradients are estimated from
//! forward evaluations only, so these checks stay independent of the
//! analytic derivatives they audit.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

const GLOBAL_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub eps: f32,
    pub tolerance: f64,
    /// Elements probed per input (all of them when the input is smaller).
    pub samples: usize,
    /// Lower bound on the relative-error denominator, as a fraction of the
    /// largest analytic gradient magnitude of the same input. A second floor
    /// at 1e-3 of the largest gradient over all inputs also applies.
    pub floor_fraction: f64,
}

impl GradCheck {
    pub fn new(eps: f32, tolerance: f64) -> Self {
        GradCheck {
            eps,
            tolerance,
            samples: 12,
            floor_fraction: 1e-2,
        }
    }

    pub fn samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Probes dropped because the function has a kink within ±eps.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    /// `(input, element, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub per_input: Vec<InputCoverage>,
}

/// Probe counts for one input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InputCoverage {
    pub checked: usize,
    pub skipped: usize,
    /// Probes requested: `min(samples, numel)`.
    pub quota: usize,
}

impl GradCheckReport {
    /// Within tolerance, with every input checked on at least half of its
    /// quota so that kink skipping cannot make the check vacuous.
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.per_input.iter().all(|c| 2 * c.checked >= c.quota) && self.max_rel_err <= tol
    }
}

/// Weighted output sum `Σ r·f(inputs)` in `f64`.
fn probe<F>(build: &F, inputs: &[Tensor], weights: &Tensor) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = tape.value(build(&tape, &vars)?);
    Ok(out
        .data()
        .iter()
        .zip(weights.data())
        .map(|(&y, &r)| y as f64 * r as f64)
        .sum())
}

fn perturbed(t: &Tensor, index: usize, delta: f32) -> Tensor {
    let mut data = t.data().to_vec();
    data[index] += delta;
    Tensor::new(t.shape(), data).expect("same shape")
}

/// Compares tape gradients of `Σ r·f(inputs)` (random fixed `r`) with
/// central differences on randomly chosen elements of every input.
pub fn check_gradients<F>(inputs: &[Tensor], build: F, cfg: GradCheck, rng: &mut Rng) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&tape, &vars)?;
    let out_shape = tape.shape(out);
    let n_out: usize = out_shape.iter().product();
    let weights = Tensor::new(
        &out_shape,
        (0..n_out).map(|_| rng.range_f32(-1.0, 1.0)).collect(),
    )?;
    let grads = tape.backward_with_seed(out, weights.clone())?;

    let analytic: Vec<Tensor> = inputs
        .iter()
        .zip(&vars)
        .map(|(t, &v)| grads.get_or_zeros(v, t.shape()))
        .collect();
    let max_abs = |t: &Tensor| t.data().iter().fold(0.0f64, |m, &g| m.max(g.abs() as f64));
    let global = analytic.iter().map(max_abs).fold(0.0, f64::max);

    let mut report = GradCheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = &analytic[i];
        // Inputs whose true gradient vanishes (a bias feeding a normalization)
        // are judged against the overall gradient scale instead.
        let floor = (cfg.floor_fraction * max_abs(analytic))
            .max(GLOBAL_FLOOR_FRACTION * global)
            .max(1e-6);
        let n = input.numel();
        report.per_input.push(InputCoverage {
            quota: cfg.samples.min(n),
            ..InputCoverage::default()
        });
        let mut candidates: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut candidates);
        let mut taken = 0;
        for &idx in &candidates {
            if taken >= cfg.samples.min(n) {
                break;
            }
            let f_zero = probe(&build, inputs, &weights)?;
            let central = |h: f32| -> Result<(f64, f64, f64)> {
                let mut shifted = inputs.to_vec();
                shifted[i] = perturbed(input, idx, h);
                let f_plus = probe(&build, &shifted, &weights)?;
                shifted[i] = perturbed(input, idx, -h);
                let f_minus = probe(&build, &shifted, &weights)?;
                let h = h as f64;
                Ok(((f_plus - f_minus) / (2.0 * h), (f_plus - f_zero) / h, (f_zero - f_minus) / h))
            };
            let (numeric, right, left) = central(cfg.eps)?;
            let (half, _, _) = central(cfg.eps / 2.0)?;
            // One-sided slopes that disagree, or a central difference that
            // moves with the step size, mean a kink lies within reach.
            let kink = (right - left).abs() > 0.1 * right.abs().max(left.abs()) + floor
                || (numeric - half).abs() > 0.25 * cfg.tolerance * numeric.abs().max(half.abs()).max(floor);
            if kink {
                report.skipped_kinks += 1;
                report.per_input[i].skipped += 1;
                continue;
            }
            taken += 1;
            report.per_input[i].checked += 1;
            let a = analytic.data()[idx] as f64;
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((i, idx, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Direct zero-padded cross-correlation, one output element at a time.
pub fn brute_conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let [n, h, wd, c] = x.dims4().expect("NHWC input");
    let (k, co) = (w.shape()[0], w.shape()[3]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f32; n * ho * wo * co];
    for s in 0..n {
        for i in 0..ho {
            for j in 0..wo {
                for o in 0..co {
                    let mut acc = b.map_or(0.0, |b| b.data()[o] as f64);
                    for di in 0..k {
                        for dj in 0..k {
                            let ii = (i * stride + di) as isize - pad as isize;
                            let jj = (j * stride + dj) as isize - pad as isize;
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                continue;
                            }
                            for ci in 0..c {
                                acc += x.data()[((s * h + ii as usize) * wd + jj as usize) * c + ci] as f64
                                    * w.data()[((di * k + dj) * c + ci) * co + o] as f64;
                            }
                        }
                    }
                    out[((s * ho + i) * wo + j) * co + o] = acc as f32;
                }
            }
        }
    }
    Tensor::new(&[n, ho, wo, co], out).expect("shape")
}

/// Per-pixel local convolution written as nested loops over the flattened
/// kernel index `((di·K + dj)·C_in + c_in)·C_out + c_out`.
pub fn brute_local_conv(x: &Tensor, w_adaptive: &Tensor, b_adaptive: &Tensor, k: usize, c_out: usize) -> Tensor {
    let [n, h, wd, c_in] = x.dims4().expect("NHWC input");
    let c_ad = k * k * c_in * c_out;
    let pad = (k - 1) / 2;
    let mut out = vec![0.0f32; n * h * wd * c_out];
    for s in 0..n {
        for i in 0..h {
            for j in 0..wd {
                let pix = (s * h + i) * wd + j;
                for o in 0..c_out {
                    let mut acc = b_adaptive.data()[pix * c_out + o] as f64;
                    for di in 0..k {
                        for dj in 0..k {
                            let ii = i as isize + di as isize - pad as isize;
                            let jj = j as isize + dj as isize - pad as isize;
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                continue;
                            }
                            for ci in 0..c_in {
                                let q = ((di * k + dj) * c_in + ci) * c_out + o;
                                acc += x.data()[((s * h + ii as usize) * wd + jj as usize) * c_in + ci] as f64
                                    * w_adaptive.data()[pix * c_ad + q] as f64;
                            }
                        }
                    }
                    out[pix * c_out + o] = acc as f32;
                }
            }
        }
    }
    Tensor::new(&[n, h, wd, c_out], out).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y = x²` whose backward is off by a factor, to show the check bites.
    fn square(tape: &Tape, x: Var, slope_factor: f32) -> Var {
        let xv = tape.value(x);
        tape.push(
            xv.map(|v| v * v),
            &[x],
            Box::new(move |g, _| vec![Some(g.zip_map(&xv, |g, x| g * slope_factor * x).unwrap())]),
        )
    }

    #[test]
    fn accepts_correct_and_rejects_wrong_backward() {
        let mut rng = Rng::new(1);
        let x = crate::rng::sample_gaussian(&mut rng, &[8]).unwrap();
        let cfg = GradCheck::new(1e-2, 1e-3);
        let good = check_gradients(std::slice::from_ref(&x), |t, v| Ok(square(t, v[0], 2.0)), cfg, &mut rng).unwrap();
        assert!(good.passed(1e-3), "{good:?}");
        let bad = check_gradients(&[x], |t, v| Ok(square(t, v[0], 2.1)), cfg, &mut rng).unwrap();
        assert!(!bad.passed(1e-3), "{bad:?}");
    }

    #[test]
    fn all_kinks_is_not_a_pass() {
        let mut rng = Rng::new(2);
        // Every element sits within eps of the ReLU kink.
        let x = Tensor::new(&[6], vec![1e-3, -2e-3, 3e-3, -1e-3, 2e-3, -3e-3]).unwrap();
        let report = check_gradients(&[x], |t, v| Ok(t.relu(v[0])), GradCheck::new(1e-2, 1e-2), &mut rng).unwrap();
        assert_eq!(report.per_input[0].quota, 6);
        assert!(report.per_input[0].skipped > 3, "{report:?}");
        assert!(!report.passed(1e-2));
    }
}
