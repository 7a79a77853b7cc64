use serde::Serialize;

use super::{ArchName, Profile};
use crate::adaconv::{adaconv_block, AdaConvParams, AdaConvSpec, Variant};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, ConvOpts, Dense, Mode};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;

/// Convolution kernel size of every generator layer.
const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub profile: Profile,
    pub latent_dim: usize,
    /// Side of the volume produced by the dense projection.
    pub m_g: usize,
    pub base_channels: usize,
    pub upsamples: usize,
    /// Convolutions replaced by adaptive blocks, counted from the lowest resolution.
    pub n_ada: usize,
    /// Shared regression window; `None` when `n_ada == 0`.
    pub k_adaptive: Option<usize>,
    pub variant: Variant,
}

impl GeneratorSpec {
    pub fn baseline(profile: Profile) -> Self {
        let (base_channels, upsamples) = match profile {
            Profile::Paper => (128, 3),
            Profile::Tiny => (32, 2),
        };
        GeneratorSpec {
            profile,
            latent_dim: 128,
            m_g: 4,
            base_channels,
            upsamples,
            n_ada: 0,
            k_adaptive: None,
            variant: Variant::Separable,
        }
    }

    pub fn for_arch(profile: Profile, arch: &ArchName) -> Result<Self> {
        let mut spec = GeneratorSpec::baseline(profile);
        let convs = spec.convs();
        match *arch {
            ArchName::Baseline => {}
            ArchName::Partial { replaced, k_adaptive } => {
                if replaced >= convs {
                    return Err(Error::Config(format!(
                        "{arch} replaces {replaced} of {convs} convolutions in the {profile} profile; \
                         use AdaGAN-{k_adaptive}x{k_adaptive} to replace all of them"
                    )));
                }
                spec.n_ada = replaced;
                spec.k_adaptive = Some(k_adaptive);
            }
            ArchName::Full { k_adaptive } => {
                spec.n_ada = convs;
                spec.k_adaptive = Some(k_adaptive);
            }
        }
        Ok(spec)
    }

    /// Initial side for a different dataset (4 for 32×32 output, 6 for 48×48).
    pub fn with_m_g(mut self, m_g: usize) -> Self {
        self.m_g = m_g;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn convs(&self) -> usize {
        self.upsamples + 1
    }

    pub fn output_side(&self) -> usize {
        self.m_g << self.upsamples
    }

    pub fn arch_name(&self) -> ArchName {
        match (self.n_ada, self.k_adaptive) {
            (0, _) | (_, None) => ArchName::Baseline,
            (n, Some(k)) if n >= self.convs() => ArchName::Full { k_adaptive: k },
            (n, Some(k)) => ArchName::Partial {
                replaced: n,
                k_adaptive: k,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ada > self.convs() {
            return Err(Error::Config(format!(
                "n_ada = {} exceeds the {} generator convolutions",
                self.n_ada,
                self.convs()
            )));
        }
        if self.n_ada > 0 && !matches!(self.k_adaptive, Some(k) if k % 2 == 1) {
            return Err(Error::Config("adaptive layers need an odd K_adaptive".into()));
        }
        if self.base_channels >> self.upsamples == 0 || self.m_g == 0 || self.latent_dim == 0 {
            return Err(Error::Config(format!("degenerate generator spec {self:?}")));
        }
        Ok(())
    }

    /// `(c_in, c_out)` of convolution `i`.
    pub fn conv_channels(&self, i: usize) -> (usize, usize) {
        let c_in = self.base_channels >> i;
        let c_out = if i < self.upsamples { c_in / 2 } else { 3 };
        (c_in, c_out)
    }

    /// Per-convolution geometry, without building any parameters.
    pub fn conv_plan(&self) -> Result<Vec<ConvPlan>> {
        self.validate()?;
        (0..self.convs())
            .map(|i| {
                let (c_in, c_out) = self.conv_channels(i);
                let adaconv = match self.k_adaptive {
                    Some(k) if i < self.n_ada => Some(AdaConvSpec::new(KERNEL, k, c_in, c_out, self.variant)?),
                    _ => None,
                };
                Ok(ConvPlan {
                    kernel: KERNEL,
                    c_in,
                    c_out,
                    side: self.m_g << (i + 1).min(self.upsamples),
                    adaconv,
                })
            })
            .collect()
    }
}

/// Geometry of one generator convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConvPlan {
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Output side; convolutions keep the spatial size.
    pub side: usize,
    pub adaconv: Option<AdaConvSpec>,
}

#[derive(Clone, Debug)]
enum ConvLayer {
    Plain(Conv2d),
    Adaptive {
        spec: AdaConvSpec,
        params: AdaConvParams<ParamId>,
    },
}

impl ConvLayer {
    fn forward(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        match self {
            ConvLayer::Plain(conv) => conv.forward(tape, bound, x),
            ConvLayer::Adaptive { spec, params } => adaconv_block(tape, x, &params.vars(bound), spec),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv,
    AdaConv,
}

/// One row of the architecture table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSummary {
    pub kind: LayerKind,
    pub resize: bool,
    pub batch_norm: bool,
    /// `[H, W, C]` of the layer output.
    pub output: [usize; 3],
    pub params: usize,
    /// Present for adaptive layers.
    pub adaconv: Option<AdaConvSpec>,
}

/// Dense projection, `upsamples` × (resize, conv, batch norm, ReLU), then a
/// final conv with Tanh. Owns its parameters.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub params: ParamStore,
    dense: Dense,
    convs: Vec<ConvLayer>,
    norms: Vec<BatchNorm>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let projected = spec.m_g * spec.m_g * spec.base_channels;
        let dense = Dense::new(&mut params, rng, "dense", spec.latent_dim, projected)?;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for i in 0..spec.convs() {
            let (c_in, c_out) = spec.conv_channels(i);
            let name = format!("conv{i}");
            let layer = match spec.k_adaptive {
                Some(k_adaptive) if i < spec.n_ada => {
                    let ada = AdaConvSpec::new(KERNEL, k_adaptive, c_in, c_out, spec.variant)?;
                    let p = AdaConvParams::init(&ada, rng)?.register(&mut params, &name);
                    ConvLayer::Adaptive { spec: ada, params: p }
                }
                _ => ConvLayer::Plain(Conv2d::new(&mut params, rng, &name, KERNEL, c_in, c_out, ConvOpts::same(KERNEL))?),
            };
            convs.push(layer);
            if i < spec.upsamples {
                norms.push(BatchNorm::new(&mut params, &format!("bn{i}"), c_out)?);
            }
        }
        Ok(Generator {
            spec,
            params,
            dense,
            convs,
            norms,
        })
    }

    pub fn arch_name(&self) -> ArchName {
        self.spec.arch_name()
    }

    pub fn bind(&self, tape: &Tape, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    /// Maps `z: [N, latent]` to images `[N, S, S, 3]` in `[−1, 1]`. Returns
    /// every layer output, the image last.
    pub fn forward_trace(&self, tape: &Tape, bound: &Bound, z: Var, mode: Mode) -> Result<Vec<Var>> {
        let s = &self.spec;
        let n = tape.shape(z)[0];
        let h = self.dense.forward(tape, bound, z)?;
        let mut x = tape.reshape(h, &[n, s.m_g, s.m_g, s.base_channels])?;
        let mut trace = vec![x];
        for (i, conv) in self.convs.iter().enumerate() {
            if let Some(bn) = self.norms.get(i) {
                x = tape.resize_nn_2x(x)?;
                x = conv.forward(tape, bound, x)?;
                x = bn.forward(tape, &self.params, bound, x, mode)?;
                x = tape.relu(x);
            } else {
                x = conv.forward(tape, bound, x)?;
                x = tape.tanh(x);
            }
            trace.push(x);
        }
        Ok(trace)
    }

    pub fn forward(&self, tape: &Tape, bound: &Bound, z: Var, mode: Mode) -> Result<Var> {
        Ok(*self.forward_trace(tape, bound, z, mode)?.last().expect("non-empty trace"))
    }

    /// Convenience: eval-mode samples for a latent batch, no gradients.
    pub fn sample(&self, z: &crate::tensor::Tensor) -> Result<crate::tensor::Tensor> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let z = tape.constant(z.clone());
        let out = self.forward(&tape, &bound, z, Mode::Eval)?;
        Ok(tape.value(out))
    }

    pub fn num_params(&self) -> usize {
        self.params.num_trainable()
    }

    /// Architecture table derived from the constructed parameters.
    pub fn layers(&self) -> Vec<LayerSummary> {
        let s = &self.spec;
        let numel = |id: ParamId| self.params.get(id).numel();
        let mut rows = vec![LayerSummary {
            kind: LayerKind::Dense,
            resize: false,
            batch_norm: false,
            output: [s.m_g, s.m_g, s.base_channels],
            params: numel(self.dense.weight) + numel(self.dense.bias),
            adaconv: None,
        }];
        let mut side = s.m_g;
        for (i, conv) in self.convs.iter().enumerate() {
            let bn = self.norms.get(i);
            if bn.is_some() {
                side *= 2;
            }
            let (_, c_out) = s.conv_channels(i);
            let (kind, mut params, adaconv) = match conv {
                ConvLayer::Plain(c) => (LayerKind::Conv, numel(c.weight) + numel(c.bias), None),
                ConvLayer::Adaptive { spec, params } => (
                    LayerKind::AdaConv,
                    params.pieces().iter().map(|(_, &id)| numel(id)).sum(),
                    Some(*spec),
                ),
            };
            if let Some(bn) = bn {
                params += numel(bn.gamma) + numel(bn.beta);
            }
            rows.push(LayerSummary {
                kind,
                resize: bn.is_some(),
                batch_norm: bn.is_some(),
                output: [side, side, c_out],
                params,
                adaconv,
            });
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_gaussian;

    fn paper(arch: &str) -> GeneratorSpec {
        GeneratorSpec::for_arch(Profile::Paper, &arch.parse().unwrap()).unwrap()
    }

    #[test]
    fn dense_parameter_count() {
        let g = Generator::new(paper("Baseline"), &mut Rng::new(0)).unwrap();
        assert_eq!(g.layers()[0].params, 264_192);
    }

    #[test]
    fn replacement_is_lowest_resolution_first() {
        let g = Generator::new(paper("AdaGAN-1-3x3"), &mut Rng::new(0)).unwrap();
        let kinds: Vec<_> = g.layers().iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            [LayerKind::Dense, LayerKind::AdaConv, LayerKind::Conv, LayerKind::Conv, LayerKind::Conv]
        );
        let ada = g.layers()[1].adaconv.unwrap();
        assert_eq!((ada.c_in, ada.c_out, ada.k_filter, ada.k_adaptive), (128, 64, 3, 3));
    }

    #[test]
    fn spec_name_round_trip() {
        for profile in [Profile::Paper, Profile::Tiny] {
            let convs = profile.generator_convs();
            for n_ada in 0..=convs {
                for k in [1, 3, 5] {
                    let mut spec = GeneratorSpec::baseline(profile);
                    if n_ada > 0 {
                        spec.n_ada = n_ada;
                        spec.k_adaptive = Some(k);
                    }
                    let name = spec.arch_name().to_string();
                    let back = GeneratorSpec::for_arch(profile, &name.parse().unwrap()).unwrap();
                    assert_eq!(back, spec, "{name}");
                }
            }
        }
    }

    #[test]
    fn tiny_profile_rejects_partial_covering_all_layers() {
        assert!(GeneratorSpec::for_arch(Profile::Tiny, &"AdaGAN-3-3x3".parse().unwrap()).is_err());
        assert!(GeneratorSpec::for_arch(Profile::Paper, &"AdaGAN-3-3x3".parse().unwrap()).is_ok());
    }

    #[test]
    fn tiny_forward_shapes_and_range() {
        let mut rng = Rng::new(4);
        let spec = GeneratorSpec::for_arch(Profile::Tiny, &"AdaGAN-1-3x3".parse().unwrap()).unwrap();
        let g = Generator::new(spec, &mut rng).unwrap();
        let tape = Tape::new();
        let bound = g.bind(&tape, true);
        let z = tape.constant(sample_gaussian(&mut rng, &[3, 128]).unwrap());
        let trace = g.forward_trace(&tape, &bound, z, Mode::Train).unwrap();
        let shapes: Vec<_> = trace.iter().map(|&v| tape.shape(v)).collect();
        assert_eq!(
            shapes,
            vec![vec![3, 4, 4, 32], vec![3, 8, 8, 16], vec![3, 16, 16, 8], vec![3, 16, 16, 3]]
        );
        let img = tape.value(*trace.last().unwrap());
        assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        // Two batch-norm layers each queue mean and variance updates.
        assert_eq!(bound.pending_updates(), 4);
    }

    #[test]
    fn plan_matches_constructed_layers() {
        let mut rng = Rng::new(8);
        let spec = GeneratorSpec::for_arch(Profile::Tiny, &"AdaGAN-2-3x3".parse().unwrap()).unwrap();
        let g = Generator::new(spec.clone(), &mut rng).unwrap();
        let plan = spec.conv_plan().unwrap();
        for (p, row) in plan.iter().zip(&g.layers()[1..]) {
            assert_eq!([p.side, p.side, p.c_out], row.output);
            assert_eq!(p.adaconv, row.adaconv);
        }
    }

    #[test]
    fn invalid_n_ada() {
        let mut spec = GeneratorSpec::baseline(Profile::Paper);
        spec.n_ada = 5;
        spec.k_adaptive = Some(3);
        assert!(matches!(Generator::new(spec, &mut Rng::new(0)), Err(Error::Config(_))));
    }
}
