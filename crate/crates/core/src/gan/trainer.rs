//! Alternating discriminator / generator updates.
//!
//! Each iteration draws one latent batch and runs the generator once on a
//! tape with generator weights as leaves. The discriminator step treats that
//! output as a constant; the generator step then continues on the same tape
//! with discriminator weights bound as constants, so one update never
//! touches the other network's parameters.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::{discriminator_loss, generator_loss, GeneratorLoss};
use super::spectral::TRAIN_ITERATIONS;
use crate::autodiff::{Tape, Var};
use crate::data::{BatchCursor, BatchIter, Dataset};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::{sample_gaussian, Rng, RngState};
use crate::tensor::Tensor;
use crate::zoo::{Checkpoint, Discriminator, Generator};

/// Stream of the latent sampler; batch permutations use their own streams.
const LATENT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub iterations: u64,
    pub seed: u64,
    pub log_every: u64,
    pub snapshot_every: u64,
    pub g_loss: GeneratorLoss,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 64,
            d_steps_per_g_step: 1,
            iterations: 5000,
            seed: 0,
            log_every: 1,
            snapshot_every: 500,
            g_loss: GeneratorLoss::default(),
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {}", self.batch_size)));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be at least 1".into()));
        }
        if self.log_every == 0 || self.snapshot_every == 0 {
            return Err(Error::Config("log and snapshot cadences must be positive".into()));
        }
        if !(self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// One metrics-log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iteration: u64,
    #[serde(rename = "loss_D")]
    pub loss_d: f32,
    #[serde(rename = "loss_G")]
    pub loss_g: f32,
    pub d_acc_real: f32,
    pub d_acc_fake: f32,
    pub grad_norm_d: f64,
    pub grad_norm_g: f64,
    pub wall_ms: f64,
}

impl Metrics {
    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &Metrics) -> bool {
        Metrics {
            wall_ms: 0.0,
            ..self.clone()
        } == Metrics {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

fn grad_norm(grads: &[Option<Tensor>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data())
        .map(|&x| x as f64 * x as f64)
        .sum::<f64>()
        .sqrt()
}

fn fraction(t: &Tensor, pred: impl Fn(f32) -> bool) -> f32 {
    t.data().iter().filter(|&&x| pred(x)).count() as f32 / t.numel() as f32
}

fn finite_loss(tape: &Tape, v: Var, iteration: u64, what: &str) -> Result<f32> {
    let x = tape.value(v).item()?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Divergence {
            iteration,
            what: format!("{what} is {x}"),
        })
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    adam_g: Adam,
    adam_d: Adam,
    batches: BatchIter,
    latent_rng: Rng,
    /// Completed iterations.
    pub iteration: u64,
    pub d_updates: u64,
    pub g_updates: u64,
}

impl Trainer {
    pub fn new(generator: Generator, discriminator: Discriminator, config: TrainConfig, dataset_len: usize) -> Result<Self> {
        config.validate()?;
        if generator.spec.output_side() != discriminator.spec.input_side {
            return Err(Error::Config(format!(
                "generator emits {0}×{0} images but the discriminator expects {1}×{1}",
                generator.spec.output_side(),
                discriminator.spec.input_side
            )));
        }
        let adam_g = Adam::new(config.adam(), &generator.params);
        let adam_d = Adam::new(config.adam(), &discriminator.params);
        Ok(Trainer {
            batches: BatchIter::new(config.seed, dataset_len),
            latent_rng: Rng::with_stream(config.seed, LATENT_STREAM),
            config,
            generator,
            discriminator,
            adam_g,
            adam_d,
            iteration: 0,
            d_updates: 0,
            g_updates: 0,
        })
    }

    fn latent(&mut self) -> Result<Tensor> {
        sample_gaussian(&mut self.latent_rng, &[self.config.batch_size, self.generator.spec.latent_dim])
    }

    /// One discriminator update against `fake`. Returns
    /// `(loss, acc_real, acc_fake, grad_norm)`.
    fn d_step(&mut self, data: &Dataset, fake: Tensor, iteration: u64) -> Result<(f32, f32, f32, f64)> {
        let real = self.batches.next_batch(data, self.config.batch_size)?;
        let sigmas = self.discriminator.power_iterate(TRAIN_ITERATIONS)?;
        let tape = Tape::new();
        let bound = self.discriminator.bind(&tape, true);
        let real_logits = self.discriminator.forward(&tape, &bound, tape.constant(real), &sigmas)?;
        let fake_logits = self.discriminator.forward(&tape, &bound, tape.constant(fake), &sigmas)?;
        let loss = discriminator_loss(&tape, real_logits, fake_logits, iteration)?;
        let loss_value = finite_loss(&tape, loss, iteration, "discriminator loss")?;
        let grads = tape.backward(loss)?;
        let grads = self.discriminator.params.gradients(&bound, &grads);
        self.adam_d.step(&mut self.discriminator.params, &grads, iteration)?;
        self.d_updates += 1;
        Ok((
            loss_value,
            fraction(&tape.value(real_logits), |x| x > 0.0),
            fraction(&tape.value(fake_logits), |x| x < 0.0),
            grad_norm(&grads),
        ))
    }

    pub fn step(&mut self, data: &Dataset) -> Result<Metrics> {
        let start = Instant::now();
        let iteration = self.iteration + 1;

        // Extra discriminator steps see fresh fakes without generator gradients.
        for _ in 1..self.config.d_steps_per_g_step {
            let z = self.latent()?;
            let tape = Tape::new();
            let bound = self.generator.bind(&tape, false);
            let fake = self.generator.forward(&tape, &bound, tape.constant(z), Mode::Train)?;
            self.d_step(data, tape.value(fake), iteration)?;
        }

        let z = self.latent()?;
        let tape = Tape::new();
        let g_bound = self.generator.bind(&tape, true);
        let fake = self.generator.forward(&tape, &g_bound, tape.constant(z), Mode::Train)?;
        let (loss_d, d_acc_real, d_acc_fake, grad_norm_d) = self.d_step(data, tape.value(fake), iteration)?;

        let sigmas = self.discriminator.power_iterate(TRAIN_ITERATIONS)?;
        let d_bound = self.discriminator.bind(&tape, false);
        let logits = self.discriminator.forward(&tape, &d_bound, fake, &sigmas)?;
        let loss = generator_loss(&tape, logits, self.config.g_loss, iteration)?;
        let loss_g = finite_loss(&tape, loss, iteration, "generator loss")?;
        let grads = tape.backward(loss)?;
        let grads = self.generator.params.gradients(&g_bound, &grads);
        self.adam_g.step(&mut self.generator.params, &grads, iteration)?;
        self.generator.params.apply_updates(&g_bound)?;
        self.g_updates += 1;
        self.iteration = iteration;

        Ok(Metrics {
            iteration,
            loss_d,
            loss_g,
            d_acc_real,
            d_acc_fake,
            grad_norm_d,
            grad_norm_g: grad_norm(&grads),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Everything needed to continue the run exactly.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.generator.arch_name().to_string());
        ck.insert_meta("profile", self.generator.spec.profile);
        ck.insert_meta("variant", self.generator.spec.variant);
        ck.insert_meta("m_g", self.generator.spec.m_g);
        ck.insert_meta("iteration", self.iteration);
        ck.insert_meta("d_updates", self.d_updates);
        ck.insert_meta("g_updates", self.g_updates);
        ck.insert_meta("adam_g_step", self.adam_g.step);
        ck.insert_meta("adam_d_step", self.adam_d.step);
        ck.insert_meta("latent_rng", serde_json::to_string(&self.latent_rng.state()).expect("serializable"));
        ck.insert_meta("batch_cursor", serde_json::to_string(&self.batches.cursor()).expect("serializable"));
        ck.insert_meta("train_config", serde_json::to_string(&self.config).expect("serializable"));
        for (prefix, store) in [("g/", &self.generator.params), ("d/", &self.discriminator.params)] {
            for e in store.entries() {
                ck.push(format!("{prefix}{}", e.name), e.value.clone());
            }
        }
        for (name, t) in self.adam_g.state_tensors(&self.generator.params) {
            ck.push(format!("adam_g/{name}"), t);
        }
        for (name, t) in self.adam_d.state_tensors(&self.discriminator.params) {
            ck.push(format!("adam_d/{name}"), t);
        }
        ck
    }

    /// Rebuilds a trainer from a checkpoint. `generator` and `discriminator`
    /// must have the checkpoint's architecture; their values are replaced.
    pub fn restore(
        ck: &Checkpoint,
        mut generator: Generator,
        mut discriminator: Discriminator,
        dataset_len: usize,
    ) -> Result<Self> {
        let arch = generator.arch_name().to_string();
        if ck.arch != arch {
            return Err(Error::Config(format!(
                "checkpoint holds architecture {} but {arch} was requested",
                ck.arch
            )));
        }
        let json = |key: &str| -> Result<String> { Ok(ck.meta(key)?.to_string()) };
        let bad_json = |key: &str, e: serde_json::Error| Error::Format {
            offset: 0,
            reason: format!("checkpoint metadata {key}: {e}"),
        };
        let config: TrainConfig =
            serde_json::from_str(&json("train_config")?).map_err(|e| bad_json("train_config", e))?;
        let rng_state: RngState = serde_json::from_str(&json("latent_rng")?).map_err(|e| bad_json("latent_rng", e))?;
        let cursor: BatchCursor =
            serde_json::from_str(&json("batch_cursor")?).map_err(|e| bad_json("batch_cursor", e))?;
        let lookup = |key: &str| ck.tensor(key).cloned();
        generator.params.load_from("g/", lookup)?;
        discriminator.params.load_from("d/", lookup)?;
        let mut trainer = Trainer::new(generator, discriminator, config, dataset_len)?;
        trainer
            .adam_g
            .load_state(&trainer.generator.params, ck.meta_parse("adam_g_step")?, |k| {
                lookup(&format!("adam_g/{k}"))
            })?;
        trainer
            .adam_d
            .load_state(&trainer.discriminator.params, ck.meta_parse("adam_d_step")?, |k| {
                lookup(&format!("adam_d/{k}"))
            })?;
        trainer.latent_rng = Rng::from_state(rng_state);
        trainer.batches = BatchIter::resume(cursor, dataset_len);
        trainer.iteration = ck.meta_parse("iteration")?;
        trainer.d_updates = ck.meta_parse("d_updates")?;
        trainer.g_updates = ck.meta_parse("g_updates")?;
        Ok(trainer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthKind};
    use crate::zoo::{ArchName, DiscriminatorSpec, GeneratorSpec, Profile};

    fn setup(arch: &str, seed: u64) -> (Trainer, Dataset) {
        let mut rng = Rng::new(seed);
        let spec = GeneratorSpec::for_arch(Profile::Tiny, &arch.parse::<ArchName>().unwrap()).unwrap();
        let g = Generator::new(spec, &mut rng).unwrap();
        let d = Discriminator::new(DiscriminatorSpec::for_profile(Profile::Tiny), &mut rng).unwrap();
        let data = synth_dataset(SynthKind::Shapes, 64, 16, &mut rng).unwrap();
        let config = TrainConfig {
            batch_size: 8,
            seed,
            ..TrainConfig::default()
        };
        (Trainer::new(g, d, config, data.len()).unwrap(), data)
    }

    #[test]
    fn losses_finite_and_counters_balanced() {
        let (mut t, data) = setup("AdaGAN-1-3x3", 1);
        for _ in 0..5 {
            let m = t.step(&data).unwrap();
            assert!(m.loss_d.is_finite() && m.loss_g.is_finite());
            assert!(m.loss_d >= 0.0);
            assert_eq!(t.d_updates, t.g_updates);
        }
        assert_eq!(t.iteration, 5);
    }

    #[test]
    fn identical_seeds_identical_metrics() {
        let run = || {
            let (mut t, data) = setup("Baseline", 2);
            (0..4).map(|_| t.step(&data).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_trajectory(y)));
    }

    #[test]
    fn resume_is_bit_exact() {
        let (mut full, data) = setup("AdaGAN-1-3x3", 3);
        for _ in 0..3 {
            full.step(&data).unwrap();
        }
        let bytes = full.checkpoint().to_bytes();
        let expected: Vec<Metrics> = (0..4).map(|_| full.step(&data).unwrap()).collect();

        let (fresh, _) = setup("AdaGAN-1-3x3", 99);
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let mut resumed = Trainer::restore(&ck, fresh.generator, fresh.discriminator, data.len()).unwrap();
        assert_eq!(resumed.iteration, 3);
        for want in &expected {
            let got = resumed.step(&data).unwrap();
            assert!(got.same_trajectory(want), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn arch_mismatch_names_both() {
        let (t, data) = setup("Baseline", 4);
        let ck = t.checkpoint();
        let (other, _) = setup("AdaGAN-1-3x3", 4);
        let err = Trainer::restore(&ck, other.generator, other.discriminator, data.len()).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("Baseline") && msg.contains("AdaGAN-1-3x3"), "{msg}");
    }

    #[test]
    fn updates_are_isolated() {
        let (mut t, data) = setup("Baseline", 5);
        let g_before: Vec<Tensor> = t.generator.params.entries().iter().map(|e| e.value.clone()).collect();
        let z = t.latent().unwrap();
        let tape = Tape::new();
        let bound = t.generator.bind(&tape, false);
        let fake = t.generator.forward(&tape, &bound, tape.constant(z), Mode::Train).unwrap();
        t.d_step(&data, tape.value(fake), 1).unwrap();
        for (e, before) in t.generator.params.entries().iter().zip(&g_before) {
            assert_eq!(e.value.data(), before.data(), "{}", e.name);
        }
    }

    #[test]
    fn tiny_batch_rejected() {
        let config = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }
}
