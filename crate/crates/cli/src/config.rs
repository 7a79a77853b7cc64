//! Experiment configuration and its plain-text `key = value` form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use adagan::adaconv::Variant;
use adagan::data::SynthKind;
use adagan::gan::TrainConfig;
use adagan::zoo::{ArchName, GeneratorSpec, Profile};
use adagan::{Error, Result};

/// Where training images come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetSpec {
    Synth(SynthKind),
    /// CIFAR-10 binary batch files.
    Cifar10(Vec<PathBuf>),
}

impl DatasetSpec {
    pub fn is_shapes(&self) -> bool {
        matches!(self, DatasetSpec::Synth(SynthKind::Shapes))
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Synth(kind) => write!(f, "{kind}"),
            DatasetSpec::Cifar10(paths) => {
                let joined: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                write!(f, "cifar10:{}", joined.join(","))
            }
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("cifar10:") {
            let paths: Vec<PathBuf> = rest.split(',').filter(|p| !p.is_empty()).map(PathBuf::from).collect();
            if paths.is_empty() {
                return Err(Error::Config("cifar10 dataset needs at least one batch file".into()));
            }
            return Ok(DatasetSpec::Cifar10(paths));
        }
        Ok(DatasetSpec::Synth(s.parse()?))
    }
}

/// One experiment: architecture, data, optimizer schedule and output location.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub arch: ArchName,
    pub profile: Profile,
    pub variant: Variant,
    pub m_g: usize,
    pub dataset: DatasetSpec,
    /// Images drawn for synthetic datasets.
    pub dataset_size: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(arch: ArchName, profile: Profile) -> Self {
        ExperimentConfig {
            arch,
            profile,
            variant: Variant::Separable,
            m_g: 4,
            dataset: DatasetSpec::Synth(SynthKind::Shapes),
            dataset_size: 3000,
            train: TrainConfig {
                snapshot_every: profile.snapshot_every(),
                ..TrainConfig::default()
            },
            out: PathBuf::from("runs/default"),
        }
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        let spec = GeneratorSpec::for_arch(self.profile, &self.arch)?
            .with_m_g(self.m_g)
            .with_variant(self.variant);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_spec()?;
        self.train.validate()?;
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset_size must be positive".into()));
        }
        Ok(())
    }

    /// Plain-text form; [`ExperimentConfig::parse`] inverts it exactly.
    pub fn render(&self) -> String {
        let t = &self.train;
        let pairs: [(&str, String); 17] = [
            ("arch", self.arch.to_string()),
            ("profile", self.profile.to_string()),
            ("variant", self.variant.to_string()),
            ("m_g", self.m_g.to_string()),
            ("dataset", self.dataset.to_string()),
            ("dataset_size", self.dataset_size.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("d_steps_per_g_step", t.d_steps_per_g_step.to_string()),
            ("iterations", t.iterations.to_string()),
            ("seed", t.seed.to_string()),
            ("log_every", t.log_every.to_string()),
            ("snapshot_every", t.snapshot_every.to_string()),
            ("g_loss", t.g_loss.to_string()),
            ("lr", t.lr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("out", self.out.display().to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Reads `key = value` lines over the defaults. `#` starts a comment;
    /// unknown keys are errors. `k_adaptive` completes a short AdaGAN name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let k_adaptive = get("k_adaptive").map(|v| parse_value("k_adaptive", v)).transpose()?;
        let arch = ArchName::parse_with_default(get("arch").unwrap_or("Baseline"), k_adaptive)?;
        if let (Some(k), Some(named)) = (k_adaptive, arch.k_adaptive()) {
            if k != named {
                return Err(Error::Config(format!("k_adaptive = {k} contradicts architecture {arch}")));
            }
        }
        let profile: Profile = get("profile").map(|v| parse_value("profile", v)).transpose()?.unwrap_or(Profile::Tiny);
        let mut cfg = ExperimentConfig::new(arch, profile);
        for (key, value) in &pairs {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Applies one setting. `arch`, `profile` and `k_adaptive` are
    /// resolved by [`ExperimentConfig::parse`].
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "arch" | "profile" | "k_adaptive" => {}
            "variant" => self.variant = parse_value(key, value)?,
            "m_g" => self.m_g = parse_value(key, value)?,
            "dataset" => self.dataset = value.parse()?,
            "dataset_size" => self.dataset_size = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "d_steps_per_g_step" => t.d_steps_per_g_step = parse_value(key, value)?,
            "iterations" => t.iterations = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "log_every" => t.log_every = parse_value(key, value)?,
            "snapshot_every" => t.snapshot_every = parse_value(key, value)?,
            "g_loss" => t.g_loss = parse_value(key, value)?,
            "lr" => t.lr = parse_value(key, value)?,
            "beta1" => t.beta1 = parse_value(key, value)?,
            "beta2" => t.beta2 = parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use adagan::gan::GeneratorLoss;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn comments_blank_lines_and_short_arch() {
        let text = "# tiny smoke run\n\narch = AdaGAN-1   # lowest layer only\nk_adaptive = 5\niterations=20\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.arch.to_string(), "AdaGAN-1-5x5");
        assert_eq!(cfg.train.iterations, 20);
        assert_eq!(cfg.train.snapshot_every, 500);
    }

    #[test]
    fn paper_profile_uses_paper_cadence() {
        let cfg = ExperimentConfig::parse("profile = paper").unwrap();
        assert_eq!(cfg.train.snapshot_every, 5000);
        assert_eq!(cfg.train.batch_size, 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for text in ["arch = AdaGAN-1-3x3\nk_adaptive = 5", "colour = blue", "seed = -1", "arch = AdaGAN-9", "just words", "dataset = cifar10:"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn cifar_paths_round_trip() {
        let spec: DatasetSpec = "cifar10:a/data_batch_1.bin,b.bin".parse().unwrap();
        assert_eq!(spec, DatasetSpec::Cifar10(vec!["a/data_batch_1.bin".into(), "b.bin".into()]));
        assert_eq!(spec.to_string().parse::<DatasetSpec>().unwrap(), spec);
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        let arch = prop_oneof![
            Just("Baseline".to_string()),
            (1usize..=2, 0usize..3).prop_map(|(n, k)| format!("AdaGAN-{n}-{0}x{0}", 2 * k + 1)),
            (0usize..3).prop_map(|k| format!("AdaGAN-{0}x{0}", 2 * k + 1)),
        ];
        (
            arch,
            any::<bool>(),
            any::<bool>(),
            (2usize..512, 1u64..1_000_000, any::<u64>()),
            (1e-6f32..1.0, 0.0f32..0.999, 0.0f32..0.999),
            "[a-z0-9_/]{1,12}",
        )
            .prop_map(|(arch, paper, minimax, (batch, iters, seed), (lr, b1, b2), out)| {
                let profile = if paper { Profile::Paper } else { Profile::Tiny };
                let mut cfg = ExperimentConfig::new(arch.parse().unwrap(), profile);
                cfg.train.batch_size = batch;
                cfg.train.iterations = iters;
                cfg.train.seed = seed;
                cfg.train.lr = lr;
                cfg.train.beta1 = b1;
                cfg.train.beta2 = b2;
                if minimax {
                    cfg.train.g_loss = GeneratorLoss::Minimax;
                    cfg.variant = Variant::Naive;
                }
                cfg.out = PathBuf::from(out);
                cfg
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(cfg in arb_config()) {
            let back = ExperimentConfig::parse(&cfg.render()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
