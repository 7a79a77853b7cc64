//! Adaptive convolution blocks.
//!
//! An adaptive convolution regresses a separate `K_filter × K_filter × C_in ×
//! C_out` kernel and a `C_out` bias for every output pixel from a
//! `K_adaptive × K_adaptive` window of the input, then applies each kernel at
//! its own location:
//!
//! ```text
//! W_adaptive = ReLU(F_in ∗ W_ww + b_wb)          naive
//! W_adaptive = ReLU((F_in ∗ W_dw) ∗ W_pw + b_wb) separable (depthwise, then 1×1)
//! b_adaptive = F_in ∗ W_bw + b_bb                 linear, no activation
//! F_out      = F_in ∗local W_adaptive + b_adaptive
//! ```
//!
//! There is no normalization inside the block, so batch elements never
//! interact. Channel `q` of `W_adaptive` holds kernel entry
//! `(di, dj, c_in, c_out)` with `q = ((di·K_filter + dj)·C_in + c_in)·C_out + c_out`.
//!
//! Weight-regression convolutions start from the usual truncated-normal
//! init (σ = 0.02) with zero biases, so the initial regressed kernels are
//! small and many are clipped to exactly zero by the ReLU.

mod block;
mod cost;
mod local;

pub use block::{adaconv_block, regress_biases, regress_weights};
pub use cost::{cost_model, CostReport};
pub use local::{local_conv, local_conv_forward};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::layers::INIT_STDDEV;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{init_truncated_normal, Rng};
use crate::tensor::Tensor;

/// Default cap on the size of one `W_adaptive` activation tensor (2 GiB).
pub const DEFAULT_BYTE_BUDGET: u64 = 2 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Naive,
    Separable,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Variant::Naive),
            "separable" => Ok(Variant::Separable),
            other => Err(Error::Config(format!("unknown adaconv variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Naive => "naive",
            Variant::Separable => "separable",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AdaConvSpec {
    pub k_filter: usize,
    pub k_adaptive: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub variant: Variant,
    /// Depth multiplier of the separable weight path; always 1.
    pub c_depthwise: usize,
    pub byte_budget: u64,
}

impl AdaConvSpec {
    pub fn new(k_filter: usize, k_adaptive: usize, c_in: usize, c_out: usize, variant: Variant) -> Result<Self> {
        for (name, k) in [("K_filter", k_filter), ("K_adaptive", k_adaptive)] {
            if k == 0 || k % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and positive, got {k}")));
            }
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::Config(format!(
                "channel counts must be positive, got C_in={c_in} C_out={c_out}"
            )));
        }
        Ok(AdaConvSpec {
            k_filter,
            k_adaptive,
            c_in,
            c_out,
            variant,
            c_depthwise: 1,
            byte_budget: DEFAULT_BYTE_BUDGET,
        })
    }

    pub fn with_byte_budget(mut self, bytes: u64) -> Self {
        self.byte_budget = bytes;
        self
    }

    /// `K_filter² · C_in · C_out`: length of one flattened per-pixel kernel.
    pub fn c_adaptive(&self) -> usize {
        self.k_filter * self.k_filter * self.c_in * self.c_out
    }

    /// Bytes of the `[N, H, W, C_adaptive]` regressed-weight tensor.
    pub fn w_adaptive_bytes(&self, n: usize, h: usize, w: usize) -> u128 {
        n as u128 * h as u128 * w as u128 * self.c_adaptive() as u128 * 4
    }

    /// Fails with a capacity error when `W_adaptive` for this input would
    /// exceed the byte budget or the address space.
    pub fn check_budget(&self, n: usize, h: usize, w: usize) -> Result<()> {
        let bytes = self.w_adaptive_bytes(n, h, w);
        if bytes > self.byte_budget as u128 || bytes > isize::MAX as u128 {
            return Err(Error::Capacity {
                what: format!("W_adaptive [{n}, {h}, {w}, {}]", self.c_adaptive()),
                bytes,
                budget: self.byte_budget,
            });
        }
        Ok(())
    }

    pub fn param_shapes(&self) -> AdaConvParams<Vec<usize>> {
        let (ka, ci, co, cad) = (self.k_adaptive, self.c_in, self.c_out, self.c_adaptive());
        AdaConvParams {
            weight_path: match self.variant {
                Variant::Naive => WeightPath::Naive {
                    w_ww: vec![ka, ka, ci, cad],
                },
                Variant::Separable => WeightPath::Separable {
                    depthwise: vec![ka, ka, ci],
                    pointwise: vec![1, 1, ci, cad],
                },
            },
            b_wb: vec![cad],
            w_bw: vec![ka, ka, ci, co],
            b_bb: vec![co],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightPath<T> {
    Naive { w_ww: T },
    Separable { depthwise: T, pointwise: T },
}

/// The four learned pieces of a block: weight-regression kernel(s) and
/// bias, bias-regression kernel and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaConvParams<T = Tensor> {
    pub weight_path: WeightPath<T>,
    pub b_wb: T,
    pub w_bw: T,
    pub b_bb: T,
}

impl<T> AdaConvParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> AdaConvParams<U> {
        AdaConvParams {
            weight_path: match &self.weight_path {
                WeightPath::Naive { w_ww } => WeightPath::Naive { w_ww: f(w_ww) },
                WeightPath::Separable { depthwise, pointwise } => WeightPath::Separable {
                    depthwise: f(depthwise),
                    pointwise: f(pointwise),
                },
            },
            b_wb: f(&self.b_wb),
            w_bw: f(&self.w_bw),
            b_bb: f(&self.b_bb),
        }
    }

    /// Pieces in a fixed order: weight path, `b_wb`, `w_bw`, `b_bb`.
    pub fn pieces(&self) -> Vec<(&'static str, &T)> {
        let mut out = match &self.weight_path {
            WeightPath::Naive { w_ww } => vec![("w_ww", w_ww)],
            WeightPath::Separable { depthwise, pointwise } => {
                vec![("w_ww_depthwise", depthwise), ("w_ww_pointwise", pointwise)]
            }
        };
        out.extend([("b_wb", &self.b_wb), ("w_bw", &self.w_bw), ("b_bb", &self.b_bb)]);
        out
    }
}

impl AdaConvParams<Tensor> {
    /// Truncated-normal kernels, zero biases.
    pub fn init(spec: &AdaConvSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.param_shapes();
        let mut err = None;
        let out = shapes.map(|s| {
            let t = if s.len() == 1 {
                Tensor::zeros(s)
            } else {
                init_truncated_normal(rng, s, INIT_STDDEV)
            };
            t.unwrap_or_else(|e| {
                err.get_or_insert(e);
                Tensor::scalar(0.0)
            })
        });
        err.map_or(Ok(out), Err)
    }

    pub fn zeros(spec: &AdaConvSpec) -> Result<Self> {
        let shapes = spec.param_shapes();
        let mut err = None;
        let out = shapes.map(|s| {
            Tensor::zeros(s).unwrap_or_else(|e| {
                err.get_or_insert(e);
                Tensor::scalar(0.0)
            })
        });
        err.map_or(Ok(out), Err)
    }

    pub fn bind(&self, tape: &Tape, trainable: bool) -> AdaConvParams<Var> {
        self.map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
    }

    /// Scalars in the weight-regression path (excluding `b_wb`).
    pub fn weight_path_len(&self) -> usize {
        match &self.weight_path {
            WeightPath::Naive { w_ww } => w_ww.numel(),
            WeightPath::Separable { depthwise, pointwise } => depthwise.numel() + pointwise.numel(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.pieces().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers all pieces in `store` under `name.<piece>`.
    pub fn register(self, store: &mut ParamStore, name: &str) -> AdaConvParams<ParamId> {
        let ids: Vec<ParamId> = self
            .pieces()
            .into_iter()
            .map(|(piece, t)| store.add(format!("{name}.{piece}"), t.clone()))
            .collect();
        let mut it = ids.into_iter();
        self.map(|_| it.next().expect("one id per piece"))
    }
}

impl AdaConvParams<ParamId> {
    pub fn vars(&self, bound: &Bound) -> AdaConvParams<Var> {
        self.map(|&id| bound.var(id))
    }
}

/// Verifies bound parameter shapes against the spec.
pub(crate) fn check_param_shapes(tape: &Tape, p: &AdaConvParams<Var>, spec: &AdaConvSpec) -> Result<()> {
    let expected = spec.param_shapes();
    let same_variant = matches!(
        (&p.weight_path, &expected.weight_path),
        (WeightPath::Naive { .. }, WeightPath::Naive { .. })
            | (WeightPath::Separable { .. }, WeightPath::Separable { .. })
    );
    if !same_variant {
        return Err(Error::Config("parameter variant does not match spec".into()));
    }
    for ((name, &var), (_, shape)) in p.pieces().into_iter().zip(expected.pieces()) {
        let actual = tape.shape(var);
        if &actual != shape {
            return Err(Error::Dimension {
                op: match name {
                    "w_ww" | "w_ww_depthwise" | "w_ww_pointwise" => "adaconv weight regression",
                    _ => "adaconv parameter",
                },
                lhs: shape.clone(),
                rhs: actual,
            });
        }
    }
    Ok(())
}
