use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::batchnorm::{BN_EPSILON, BN_MOMENTUM};
use crate::nn::conv::ConvOpts;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{init_truncated_normal, Rng};
use crate::tensor::Tensor;

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STDDEV: f32 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub opts: ConvOpts,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        opts: ConvOpts,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            init_truncated_normal(rng, &[kernel, kernel, c_in, c_out], INIT_STDDEV)?,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out])?);
        Ok(Conv2d {
            weight,
            bias,
            kernel,
            c_in,
            c_out,
            opts,
        })
    }

    pub fn forward(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.forward_with_weight(tape, bound, x, bound.var(self.weight))
    }

    /// Uses `weight` in place of the stored kernel (e.g. a normalized copy).
    pub fn forward_with_weight(&self, tape: &Tape, bound: &Bound, x: Var, weight: Var) -> Result<Var> {
        tape.conv2d(x, weight, Some(bound.var(self.bias)), self.opts)
    }
}

/// `y = flatten(x) · W + b`, with `W: [features, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub features: usize,
    pub out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, features: usize, out: usize) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            init_truncated_normal(rng, &[features, out], INIT_STDDEV)?,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out])?);
        Ok(Dense {
            weight,
            bias,
            features,
            out,
        })
    }

    pub fn forward(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.forward_with_weight(tape, bound, x, bound.var(self.weight))
    }

    pub fn forward_with_weight(&self, tape: &Tape, bound: &Bound, x: Var, weight: Var) -> Result<Var> {
        let shape = tape.shape(x);
        let n = *shape.first().ok_or_else(|| Error::Shape {
            shape: shape.clone(),
            reason: "dense input needs a batch axis".into(),
        })?;
        let features = shape[1..].iter().product::<usize>();
        if features != self.features {
            return Err(Error::dim("dense", &shape, &[self.features, self.out]));
        }
        let flat = tape.reshape(x, &[n, features])?;
        let y = tape.matmul(flat, weight)?;
        tape.bias_add(y, bound.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f32,
    pub momentum: f32,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[channels])?),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])?),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])?),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::ones(&[channels])?),
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        })
    }

    /// Train mode normalizes with batch statistics and queues the running
    /// average update on `bound`; eval mode uses the running statistics.
    pub fn forward(&self, tape: &Tape, store: &ParamStore, bound: &Bound, x: Var, mode: Mode) -> Result<Var> {
        let (gamma, beta) = (bound.var(self.gamma), bound.var(self.beta));
        let (rm, rv) = (store.get(self.running_mean), store.get(self.running_var));
        match mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, gamma, beta, self.eps)?;
                let (m, v) = stats.update_running(rm, rv, self.momentum)?;
                bound.record_update(self.running_mean, m);
                bound.record_update(self.running_var, v);
                Ok(y)
            }
            Mode::Eval => tape.batch_norm_eval(x, gamma, beta, rm, rv, self.eps),
        }
    }
}
