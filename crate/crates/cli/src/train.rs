//! The `train` subcommand: runs the trainer and writes artifacts.

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adagan::data::{load_cifar10_binary, synth_dataset, write_sample_grid, Dataset};
use adagan::gan::{Metrics, Trainer};
use adagan::zoo::{ArchName, Checkpoint, Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use adagan::{sample_gaussian, Error, Result, Rng, Tensor};

use crate::config::{DatasetSpec, ExperimentConfig};

const DATA_STREAM: u64 = 11;
const MODEL_STREAM: u64 = 12;
const GRID_STREAM: u64 = 13;
/// Samples per grid, tiled 8 across.
const GRID_SAMPLES: usize = 64;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.txt";

/// Loads or synthesizes the training set. Synthetic sets depend only on `seed`.
pub fn load_dataset(spec: &DatasetSpec, size: usize, side: usize, seed: u64) -> Result<Dataset> {
    let data = match spec {
        DatasetSpec::Synth(kind) => synth_dataset(*kind, size, side, &mut Rng::with_stream(seed, DATA_STREAM))?,
        DatasetSpec::Cifar10(paths) => load_cifar10_binary(paths)?,
    };
    if data.side() != side {
        return Err(Error::Config(format!(
            "dataset {spec} has {0}×{0} images but the generator emits {side}×{side}",
            data.side()
        )));
    }
    Ok(data)
}

/// Freshly initialized networks for `cfg`.
pub fn build_networks(cfg: &ExperimentConfig) -> Result<(Generator, Discriminator)> {
    let spec = cfg.generator_spec()?;
    let side = spec.output_side();
    let mut rng = Rng::with_stream(cfg.train.seed, MODEL_STREAM);
    let g = Generator::new(spec, &mut rng)?;
    let d_spec = DiscriminatorSpec::for_profile(cfg.profile).with_input_side(side);
    let d = Discriminator::new(d_spec, &mut rng)?;
    Ok((g, d))
}

pub fn checkpoint_path(out: &Path, iteration: u64) -> PathBuf {
    out.join(format!("ckpt-{iteration:07}.adagan"))
}

pub fn grid_path(out: &Path, iteration: u64) -> PathBuf {
    out.join(format!("samples-{iteration:07}.ppm"))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub iterations: u64,
    pub checkpoints: Vec<PathBuf>,
    pub grids: Vec<PathBuf>,
    pub last: Option<Metrics>,
}

/// Trains to `cfg.train.iterations`, optionally continuing from a checkpoint.
///
/// Metrics are appended to `metrics.jsonl` every `log_every` iterations;
/// checkpoints and sample grids are written every `snapshot_every`
/// iterations and at the end. A diverged run stops with its last
/// checkpoint left in place.
pub fn cmd_train(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (g, d) = build_networks(cfg)?;
    let data = load_dataset(&cfg.dataset, cfg.dataset_size, g.spec.output_side(), cfg.train.seed)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join(CONFIG_FILE), cfg.render())?;

    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mut t = Trainer::restore(&ck, g, d, data.len())?;
            // Schedule and cadence come from the command; the optimizer
            // state and data position come from the checkpoint.
            t.config.iterations = cfg.train.iterations;
            t.config.log_every = cfg.train.log_every;
            t.config.snapshot_every = cfg.train.snapshot_every;
            t
        }
        None => Trainer::new(g, d, cfg.train.clone(), data.len())?,
    };
    let metrics_file = OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(cfg.out.join(METRICS_FILE))?;
    let mut log = BufWriter::new(metrics_file);
    let grid_z = sample_gaussian(
        &mut Rng::with_stream(cfg.train.seed, GRID_STREAM),
        &[GRID_SAMPLES, trainer.generator.spec.latent_dim],
    )?;

    let mut outcome = TrainOutcome::default();
    let total = trainer.config.iterations;
    while trainer.iteration < total {
        let m = match trainer.step(&data) {
            Ok(m) => m,
            Err(e) => {
                log.flush()?;
                return Err(e);
            }
        };
        let it = m.iteration;
        if it % trainer.config.log_every == 0 || it == total {
            serde_json::to_writer(&mut log, &m).map_err(std::io::Error::from)?;
            log.write_all(b"\n")?;
            log::info!(
                "iter {it}: loss_D {:.4} loss_G {:.4} acc real {:.2} fake {:.2}",
                m.loss_d,
                m.loss_g,
                m.d_acc_real,
                m.d_acc_fake
            );
        }
        if it % trainer.config.snapshot_every == 0 || it == total {
            log.flush()?;
            snapshot(&trainer, &grid_z, &cfg.out, &mut outcome)?;
        }
        outcome.last = Some(m);
    }
    log.flush()?;
    outcome.iterations = trainer.iteration;
    Ok(outcome)
}

fn snapshot(trainer: &Trainer, grid_z: &Tensor, out: &Path, outcome: &mut TrainOutcome) -> Result<()> {
    let it = trainer.iteration;
    let ck_path = checkpoint_path(out, it);
    trainer.checkpoint().save(&ck_path)?;
    let grid = grid_path(out, it);
    write_sample_grid(&trainer.generator.sample(grid_z)?, 8, &grid)?;
    outcome.checkpoints.push(ck_path);
    outcome.grids.push(grid);
    Ok(())
}

/// Reads a metrics log back.
pub fn read_metrics(path: &Path) -> Result<Vec<Metrics>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                offset: i as u64,
                reason: format!("metrics line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Rebuilds the generator stored in a training checkpoint.
pub fn generator_from_checkpoint(ck: &Checkpoint) -> Result<Generator> {
    let arch: ArchName = ck.arch.parse()?;
    let spec = GeneratorSpec::for_arch(ck.meta_parse("profile")?, &arch)?
        .with_m_g(ck.meta_parse("m_g")?)
        .with_variant(ck.meta_parse("variant")?);
    let mut g = Generator::new(spec, &mut Rng::new(0))?;
    g.params.load_from("g/", |k| ck.tensor(k).cloned())?;
    Ok(g)
}
