//! The `audit` subcommand: per-layer parameter and FLOP counts of the
//! weight-regression path, naive versus depthwise-separable.

use adagan::adaconv::{cost_model, AdaConvParams, AdaConvSpec, Variant};
use adagan::zoo::{ArchName, GeneratorSpec, Profile};
use adagan::Result;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCost {
    pub layer: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub side: usize,
    pub k_filter: usize,
    pub k_adaptive: usize,
    pub c_adaptive: u64,
    pub params_naive: u64,
    pub params_separable: u64,
    pub flops_naive: u64,
    pub flops_separable: u64,
    pub ratio: f64,
    /// Weight-path sizes of freshly built naive and separable tensors.
    pub constructed_naive: u64,
    pub constructed_separable: u64,
}

impl LayerCost {
    pub fn constructed_agree(&self) -> bool {
        self.constructed_naive == self.params_naive && self.constructed_separable == self.params_separable
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub arch: String,
    pub profile: Profile,
    pub layers: Vec<LayerCost>,
    pub total_params_naive: u64,
    pub total_params_separable: u64,
    pub total_flops_naive: u64,
    pub total_flops_separable: u64,
    pub total_ratio: f64,
}

impl AuditReport {
    pub fn all_agree(&self) -> bool {
        self.layers.iter().all(LayerCost::constructed_agree)
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = format!("{} ({} profile)\n", self.arch, self.profile);
        s += "layer  C_in C_out  side  K_a       naive   separable   ratio  tensors\n";
        for l in &self.layers {
            s += &format!(
                "{:>5} {:>5} {:>5} {:>5} {:>4} {:>11} {:>11} {:>7.3}  {}\n",
                l.layer,
                l.c_in,
                l.c_out,
                l.side,
                l.k_adaptive,
                l.params_naive,
                l.params_separable,
                l.ratio,
                if l.constructed_agree() { "ok" } else { "MISMATCH" }
            );
        }
        s += &format!(
            "total params {} naive, {} separable (ratio {:.3}); FLOPs {} naive, {} separable\n",
            self.total_params_naive,
            self.total_params_separable,
            self.total_ratio,
            self.total_flops_naive,
            self.total_flops_separable
        );
        s
    }
}

fn constructed(spec: &AdaConvSpec, variant: Variant) -> Result<u64> {
    let spec = AdaConvSpec { variant, ..*spec };
    Ok(AdaConvParams::zeros(&spec)?.weight_path_len() as u64)
}

/// Costs every adaptive layer of `arch`. `k_adaptive` overrides the
/// window encoded in the name. Parameter tensors are allocated zeroed to
/// confirm the counts and dropped immediately.
pub fn cmd_audit(arch: &ArchName, profile: Profile, m_g: usize, k_adaptive: Option<usize>) -> Result<AuditReport> {
    let mut spec = GeneratorSpec::for_arch(profile, arch)?.with_m_g(m_g);
    if spec.n_ada > 0 {
        if let Some(k) = k_adaptive {
            spec.k_adaptive = Some(k);
        }
    }
    let mut layers = Vec::new();
    for (i, plan) in spec.conv_plan()?.iter().enumerate() {
        let Some(ada) = plan.adaconv else { continue };
        let cost = cost_model(&ada);
        let pixels = (plan.side * plan.side) as u64;
        layers.push(LayerCost {
            layer: i,
            c_in: plan.c_in,
            c_out: plan.c_out,
            side: plan.side,
            k_filter: ada.k_filter,
            k_adaptive: ada.k_adaptive,
            c_adaptive: cost.c_adaptive,
            params_naive: cost.params_naive,
            params_separable: cost.params_separable,
            flops_naive: cost.flops_naive * pixels,
            flops_separable: cost.flops_separable * pixels,
            ratio: cost.ratio,
            constructed_naive: constructed(&ada, Variant::Naive)?,
            constructed_separable: constructed(&ada, Variant::Separable)?,
        });
    }
    let sum = |f: fn(&LayerCost) -> u64| layers.iter().map(f).sum::<u64>();
    let (pn, ps) = (sum(|l| l.params_naive), sum(|l| l.params_separable));
    Ok(AuditReport {
        arch: spec.arch_name().to_string(),
        profile,
        total_params_naive: pn,
        total_params_separable: ps,
        total_flops_naive: sum(|l| l.flops_naive),
        total_flops_separable: sum(|l| l.flops_separable),
        total_ratio: if ps == 0 { 1.0 } else { pn as f64 / ps as f64 },
        layers,
    })
}
