use super::Profile;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gan::spectral::{init_u, power_iteration};
use crate::nn::{Conv2d, ConvOpts, Dense, LEAKY_SLOPE};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscriminatorSpec {
    pub input_side: usize,
    /// Widths of the four stages; each of the first three is a 3×3 stride-1
    /// conv followed by a 4×4 stride-2 conv, the last a single 3×3 conv.
    pub widths: [usize; 4],
}

impl DiscriminatorSpec {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => DiscriminatorSpec {
                input_side: 32,
                widths: [64, 128, 256, 512],
            },
            Profile::Tiny => DiscriminatorSpec {
                input_side: 16,
                widths: [16, 32, 64, 128],
            },
        }
    }

    pub fn with_input_side(mut self, side: usize) -> Self {
        self.input_side = side;
        self
    }

    /// `(kernel, stride, c_out)` per convolution.
    pub fn ladder(&self) -> Vec<(usize, usize, usize)> {
        let w = self.widths;
        vec![
            (3, 1, w[0]),
            (4, 2, w[0]),
            (3, 1, w[1]),
            (4, 2, w[1]),
            (3, 1, w[2]),
            (4, 2, w[2]),
            (3, 1, w[3]),
        ]
    }
}

/// Strided-conv discriminator with leaky ReLU (slope 0.1) after every conv
/// and a dense head producing one unbounded logit. Every conv and dense
/// weight is divided by its spectral norm in the forward pass.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub params: ParamStore,
    convs: Vec<Conv2d>,
    head: Dense,
    /// `(weight, power-iteration vector)` pairs, convs then head.
    normalized: Vec<(ParamId, ParamId)>,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, rng: &mut Rng) -> Result<Self> {
        if spec.input_side == 0 || !spec.input_side.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "discriminator input side must be a positive multiple of 8, got {}",
                spec.input_side
            )));
        }
        let mut params = ParamStore::new();
        let mut convs = Vec::new();
        let mut c_in = 3;
        for (i, (k, stride, c_out)) in spec.ladder().into_iter().enumerate() {
            let opts = if stride == 1 {
                ConvOpts::same(k)
            } else {
                ConvOpts::strided(stride, 1)
            };
            convs.push(Conv2d::new(&mut params, rng, &format!("conv{i}"), k, c_in, c_out, opts)?);
            c_in = c_out;
        }
        let side = spec.input_side / 8;
        let head = Dense::new(&mut params, rng, "head", side * side * c_in, 1)?;
        let weights: Vec<(ParamId, String)> = convs
            .iter()
            .map(|c| c.weight)
            .chain([head.weight])
            .map(|id| (id, params.entries()[id.index()].name.clone()))
            .collect();
        let mut normalized = Vec::new();
        for (id, name) in weights {
            let u = init_u(params.get(id), rng)?;
            normalized.push((id, params.add_buffer(format!("{name}.sn_u"), u)));
        }
        Ok(Discriminator {
            spec,
            params,
            convs,
            head,
            normalized,
        })
    }

    pub fn bind(&self, tape: &Tape, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    /// Advances every power-iteration vector and returns the spectral norm
    /// estimates, one per normalized weight.
    pub fn power_iterate(&mut self, iterations: usize) -> Result<Vec<f32>> {
        let mut sigmas = Vec::with_capacity(self.normalized.len());
        for &(w, u) in &self.normalized {
            let (next, sigma) = power_iteration(self.params.get(w), self.params.get(u), iterations)?;
            self.params.set(u, next)?;
            sigmas.push(sigma);
        }
        Ok(sigmas)
    }

    /// Spectral norm estimates from the stored vectors without updating them.
    pub fn current_sigmas(&self, iterations: usize) -> Result<Vec<f32>> {
        self.normalized
            .iter()
            .map(|&(w, u)| Ok(power_iteration(self.params.get(w), self.params.get(u), iterations)?.1))
            .collect()
    }

    /// Raw weights in the order `power_iterate` reports sigmas.
    pub fn weights(&self) -> Vec<(String, Tensor)> {
        self.normalized
            .iter()
            .map(|&(w, _)| (self.params.entries()[w.index()].name.clone(), self.params.get(w).clone()))
            .collect()
    }

    /// Logits `[N, 1]` for images `[N, S, S, 3]`, each weight scaled by
    /// `1 / sigmas[i]` (a constant, so no gradient flows through σ).
    pub fn forward(&self, tape: &Tape, bound: &Bound, x: Var, sigmas: &[f32]) -> Result<Var> {
        if sigmas.len() != self.normalized.len() {
            return Err(Error::Contract(format!(
                "expected {} spectral norms, got {}",
                self.normalized.len(),
                sigmas.len()
            )));
        }
        let shape = tape.shape(x);
        let side = self.spec.input_side;
        if shape.len() != 4 || shape[1..] != [side, side, 3] {
            return Err(Error::dim("discriminator input", &shape, &[0, side, side, 3]));
        }
        let scaled = |i: usize| tape.scale(bound.var(self.normalized[i].0), 1.0 / sigmas[i]);
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward_with_weight(tape, bound, h, scaled(i))?;
            h = tape.leaky_relu(h, LEAKY_SLOPE);
        }
        self.head.forward_with_weight(tape, bound, h, scaled(self.convs.len()))
    }

    pub fn num_params(&self) -> usize {
        self.params.num_trainable()
    }
}
