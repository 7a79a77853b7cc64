//! The `eval` subcommand: a classifier two-sample proxy and shape-mode
//! coverage, each reported as mean ± stddev over groups of samples.
//!
//! Two-sample proxy: per group, `n` real and `n` generated images are split
//! in half; a small fixed convolutional classifier is trained on one half to
//! tell them apart and scored on the other. 0.5 means the two sets are
//! indistinguishable to it, 1.0 means trivially separable.

use std::path::Path;

use adagan::data::{detect_shape, Dataset, ShapeKind};
use adagan::gan::{discriminator_loss, Adam, AdamConfig};
use adagan::nn::{Conv2d, ConvOpts, Dense};
use adagan::zoo::{ArchName, Checkpoint, Generator};
use adagan::{sample_gaussian, Bound, Error, ParamStore, Result, Rng, Tape, Tensor, Var};
use serde::Serialize;

use crate::config::DatasetSpec;
use crate::train::{generator_from_checkpoint, load_dataset};

/// Group count of the reporting protocol.
pub const GROUPS: usize = 10;
const CLASSIFIER_STEPS: usize = 300;
const CLASSIFIER_BATCH: usize = 64;
const LEAK: f32 = 0.2;
/// Generation chunk, bounding peak memory of adaptive layers.
const SAMPLE_CHUNK: usize = 100;
/// Mixed into the eval seed so held-out real images differ from any
/// training set drawn with the same seed.
const HELD_OUT_SALT: u64 = 0x5eed;
/// Stream offset of generated samples.
const CONTROL_STREAM: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub groups: usize,
    /// Images per class per group.
    pub samples: usize,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        EvalConfig {
            groups: GROUPS,
            samples,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.groups < 2 || self.samples < 4 {
            return Err(Error::Config(format!(
                "eval needs at least 2 groups of 4 samples, got {} × {}",
                self.groups, self.samples
            )));
        }
        Ok(())
    }
}

/// Mean and sample standard deviation of per-group values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub groups: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Summary {
            mean,
            std: var.sqrt(),
            groups: values,
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub source: String,
    pub groups: usize,
    pub samples: usize,
    pub two_sample_accuracy: Summary,
    /// Fraction of the three shape categories found among the samples.
    pub mode_coverage: Option<Summary>,
    /// Fraction of samples the detector recognizes as any shape.
    pub recognized: Option<Summary>,
}

/// What plays the "generated" side of the comparison.
pub enum SampleSource<'a> {
    Generator(&'a Generator),
    /// Draws from a second real dataset, disjoint from the reference one:
    /// the null-hypothesis control. Sharing images between the two sides
    /// biases the score below 0.5, since memorized training images of one
    /// class reappear in the other's held-out half.
    Real(&'a Dataset),
}

impl SampleSource<'_> {
    fn name(&self) -> String {
        match self {
            SampleSource::Generator(g) => g.arch_name().to_string(),
            SampleSource::Real(d) => format!("real:{}", d.name),
        }
    }

    fn draw(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        match self {
            SampleSource::Generator(g) => {
                let mut parts = Vec::new();
                let mut left = n;
                while left > 0 {
                    let k = left.min(SAMPLE_CHUNK);
                    let z = sample_gaussian(rng, &[k, g.spec.latent_dim])?;
                    parts.push(g.sample(&z)?);
                    left -= k;
                }
                Tensor::concat_batch(&parts)
            }
            SampleSource::Real(d) => draw_real(d, n, rng),
        }
    }
}

/// `n` images without replacement when the dataset is large enough.
fn draw_real(data: &Dataset, n: usize, rng: &mut Rng) -> Result<Tensor> {
    let idx: Vec<usize> = if n <= data.len() {
        let mut perm: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut perm);
        perm.truncate(n);
        perm
    } else {
        (0..n).map(|_| rng.below(data.len())).collect()
    };
    data.images.gather_batch(&idx)
}

/// Fixed two-sample classifier: three LeakyReLU convolutions, then a logit.
struct Classifier {
    params: ParamStore,
    convs: Vec<Conv2d>,
    head: Dense,
}

impl Classifier {
    fn new(side: usize, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        let convs = vec![
            Conv2d::new(&mut params, rng, "c0", 3, 3, 16, ConvOpts::same(3))?,
            Conv2d::new(&mut params, rng, "c1", 4, 16, 32, ConvOpts::strided(2, 1))?,
            Conv2d::new(&mut params, rng, "c2", 4, 32, 32, ConvOpts::strided(2, 1))?,
        ];
        let head = Dense::new(&mut params, rng, "head", (side / 4) * (side / 4) * 32, 1)?;
        Ok(Classifier { params, convs, head })
    }

    fn logits(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for conv in &self.convs {
            h = tape.leaky_relu(conv.forward(tape, bound, h)?, LEAK);
        }
        self.head.forward(tape, bound, h)
    }

    fn predict(&self, x: &Tensor) -> Result<Vec<f32>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let out = self.logits(&tape, &bound, tape.constant(x.clone()))?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// Held-out accuracy of a classifier trained to separate `real` from `fake`.
fn two_sample_accuracy(real: &Tensor, fake: &Tensor, rng: &mut Rng) -> Result<f64> {
    let n = real.shape()[0];
    let side = real.shape()[1];
    let half = n / 2;
    let mut clf = Classifier::new(side, rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: 2e-3,
            ..AdamConfig::default()
        },
        &clf.params,
    );
    let per_class = CLASSIFIER_BATCH / 2;
    for step in 1..=CLASSIFIER_STEPS {
        let pick = |rng: &mut Rng| -> Vec<usize> { (0..per_class).map(|_| rng.below(half)).collect() };
        let r = real.gather_batch(&pick(rng))?;
        let f = fake.gather_batch(&pick(rng))?;
        let tape = Tape::new();
        let bound = clf.params.bind(&tape, true);
        let lr = clf.logits(&tape, &bound, tape.constant(r))?;
        let lf = clf.logits(&tape, &bound, tape.constant(f))?;
        let loss = discriminator_loss(&tape, lr, lf, step as u64)?;
        let grads = tape.backward(loss)?;
        let grads = clf.params.gradients(&bound, &grads);
        adam.step(&mut clf.params, &grads, step as u64)?;
    }
    let held = n - half;
    let correct_real = clf.predict(&real.batch_slice(half, held)?)?.iter().filter(|&&l| l > 0.0).count();
    let correct_fake = clf.predict(&fake.batch_slice(half, held)?)?.iter().filter(|&&l| l <= 0.0).count();
    Ok((correct_real + correct_fake) as f64 / (2 * held) as f64)
}

/// `(coverage, recognized)` of one group of images.
fn shape_stats(images: &Tensor) -> (f64, f64) {
    let [n, side, _, _] = images.dims4().expect("NHWC images");
    let per = side * side * 3;
    let mut seen = [false; 3];
    let mut recognized = 0;
    for img in images.data().chunks_exact(per) {
        if let Some(kind) = detect_shape(img, side) {
            seen[kind.index()] = true;
            recognized += 1;
        }
    }
    let found = seen.iter().filter(|&&s| s).count();
    (found as f64 / ShapeKind::ALL.len() as f64, recognized as f64 / n as f64)
}

/// Scores `source` against `real` over `cfg.groups` groups. Coverage
/// statistics are included when `shapes` is set.
pub fn evaluate(source: &SampleSource, real: &Dataset, cfg: &EvalConfig, shapes: bool) -> Result<EvalReport> {
    cfg.validate()?;
    let mut acc = Vec::new();
    let mut coverage = Vec::new();
    let mut recognized = Vec::new();
    for group in 0..cfg.groups as u64 {
        let mut real_rng = Rng::with_stream(cfg.seed, 2 * group);
        let mut fake_rng = Rng::with_stream(cfg.seed, CONTROL_STREAM + group);
        let mut clf_rng = Rng::with_stream(cfg.seed, 2 * group + 1);
        let r = draw_real(real, cfg.samples, &mut real_rng)?;
        let f = source.draw(cfg.samples, &mut fake_rng)?;
        if f.shape() != r.shape() {
            return Err(Error::Config(format!(
                "generated images {:?} do not match real images {:?}",
                f.shape(),
                r.shape()
            )));
        }
        acc.push(two_sample_accuracy(&r, &f, &mut clf_rng)?);
        if shapes {
            let (c, k) = shape_stats(&f);
            coverage.push(c);
            recognized.push(k);
        }
    }
    Ok(EvalReport {
        source: source.name(),
        groups: cfg.groups,
        samples: cfg.samples,
        two_sample_accuracy: Summary::of(acc),
        mode_coverage: shapes.then(|| Summary::of(coverage)),
        recognized: shapes.then(|| Summary::of(recognized)),
    })
}

/// Loads a training checkpoint and scores its generator. With `expect`,
/// a checkpoint holding a different architecture is rejected.
pub fn cmd_eval(
    checkpoint: &Path,
    expect: Option<&ArchName>,
    dataset: &DatasetSpec,
    dataset_size: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(want) = expect {
        if ck.arch != want.to_string() {
            return Err(Error::Config(format!(
                "checkpoint {} holds {} but {want} was requested",
                checkpoint.display(),
                ck.arch
            )));
        }
    }
    let g = generator_from_checkpoint(&ck)?;
    // Held-out real images: drawn with the eval seed, not the training seed.
    let real = load_dataset(dataset, dataset_size, g.spec.output_side(), cfg.seed ^ HELD_OUT_SALT)?;
    evaluate(&SampleSource::Generator(&g), &real, cfg, dataset.is_shapes())
}

/// Two disjoint real datasets: independent draws for synthetic kinds,
/// the two halves of the file set for CIFAR-10.
pub fn disjoint_real_pair(dataset: &DatasetSpec, size: usize, side: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    match dataset {
        DatasetSpec::Synth(_) => Ok((
            load_dataset(dataset, size, side, seed)?,
            load_dataset(dataset, size, side, seed.wrapping_add(1))?,
        )),
        DatasetSpec::Cifar10(_) => {
            let all = load_dataset(dataset, size, side, seed)?;
            let half = all.len() / 2;
            let part = |start, len| -> Result<Dataset> {
                Dataset::new(all.name.clone(), all.images.batch_slice(start, len)?)
            };
            Ok((part(0, half)?, part(half, all.len() - half)?))
        }
    }
}

/// Real-against-real control on the given dataset: expect accuracy near 0.5.
pub fn cmd_eval_control(dataset: &DatasetSpec, size: usize, side: usize, cfg: &EvalConfig) -> Result<EvalReport> {
    let (real, other) = disjoint_real_pair(dataset, size, side, cfg.seed ^ HELD_OUT_SALT)?;
    evaluate(&SampleSource::Real(&other), &real, cfg, dataset.is_shapes())
}
