use serde::Serialize;

use super::AdaConvSpec;

/// Size of the weight-regression path of one block, excluding the `b_wb` bias.
///
/// FLOPs count multiply-accumulates per output pixel; multiply by `H·W` for
/// a whole layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub c_adaptive: u64,
    pub params_naive: u64,
    pub params_separable: u64,
    pub flops_naive: u64,
    pub flops_separable: u64,
    /// `params_naive / params_separable`.
    pub ratio: f64,
}

impl CostReport {
    pub fn layer_flops_naive(&self, h: usize, w: usize) -> u64 {
        self.flops_naive * (h * w) as u64
    }

    pub fn layer_flops_separable(&self, h: usize, w: usize) -> u64 {
        self.flops_separable * (h * w) as u64
    }
}

pub fn cost_model(spec: &AdaConvSpec) -> CostReport {
    let ka2 = (spec.k_adaptive * spec.k_adaptive) as u64;
    let c_in = spec.c_in as u64;
    let c_dw = spec.c_depthwise as u64;
    let c_ad = spec.c_adaptive() as u64;
    let params_naive = ka2 * c_in * c_ad;
    let params_separable = ka2 * c_in * c_dw + c_in * c_dw * c_ad;
    CostReport {
        c_adaptive: c_ad,
        params_naive,
        params_separable,
        // Every weight is used once per output pixel under same padding.
        flops_naive: params_naive,
        flops_separable: params_separable,
        ratio: params_naive as f64 / params_separable as f64,
    }
}
