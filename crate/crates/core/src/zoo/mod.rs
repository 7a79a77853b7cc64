//! Generator and discriminator architectures, their names, and the
//! checkpoint container.

mod checkpoint;
mod discriminator;
mod generator;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use generator::{ConvPlan, Generator, GeneratorSpec, LayerKind, LayerSummary};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model scale. `Paper` is the published configuration; `Tiny` is a
/// reduced one for CPU runs (base width 32, 16×16 output, one fewer
/// upsampling stage, narrower discriminator).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Tiny,
}

impl Profile {
    pub fn image_side(self) -> usize {
        match self {
            Profile::Paper => 32,
            Profile::Tiny => 16,
        }
    }

    /// Iterations between metric snapshots and sample grids.
    pub fn snapshot_every(self) -> u64 {
        match self {
            Profile::Paper => 5000,
            Profile::Tiny => 500,
        }
    }

    /// Number of 3×3 convolutions in the generator.
    pub fn generator_convs(self) -> usize {
        GeneratorSpec::baseline(self).convs()
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "tiny" => Ok(Profile::Tiny),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected paper or tiny)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Tiny => "tiny",
        })
    }
}

/// Architecture names: `Baseline`, `AdaGAN-k-KxK` (the first `k` generator
/// convolutions replaced, lowest resolution first) and `AdaGAN-KxK` (all
/// replaced). `K` is the regression window shared by every block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchName {
    Baseline,
    Partial { replaced: usize, k_adaptive: usize },
    Full { k_adaptive: usize },
}

impl ArchName {
    /// Parses a name, taking `K` from `default_k` when the suffix is absent
    /// (`AdaGAN-1`, `AdaGAN`).
    pub fn parse_with_default(s: &str, default_k: Option<usize>) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("invalid architecture name {s:?}: {why}"));
        if s == "Baseline" {
            return Ok(ArchName::Baseline);
        }
        let rest = s.strip_prefix("AdaGAN").ok_or_else(|| bad("expected Baseline or AdaGAN..."))?;
        let parts: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.strip_prefix('-').ok_or_else(|| bad("expected '-' after AdaGAN"))?.split('-').collect()
        };
        let kernel = |p: &str| -> Result<usize> {
            let (a, b) = p.split_once('x').ok_or_else(|| bad("window must look like KxK"))?;
            let (a, b): (usize, usize) = (
                a.parse().map_err(|_| bad("window size is not a number"))?,
                b.parse().map_err(|_| bad("window size is not a number"))?,
            );
            if a != b || a % 2 == 0 {
                return Err(bad("window must be square with an odd side"));
            }
            Ok(a)
        };
        let default = || default_k.ok_or_else(|| bad("missing KxK suffix"));
        let count = |p: &str| -> Result<usize> {
            match p.parse::<usize>() {
                Ok(k) if (1..=3).contains(&k) => Ok(k),
                Ok(k) => Err(bad(&format!("replacement count {k} is outside 1..=3"))),
                Err(_) => Err(bad("expected a replacement count or KxK")),
            }
        };
        match parts.as_slice() {
            [] => Ok(ArchName::Full { k_adaptive: default()? }),
            [p] if p.contains('x') => Ok(ArchName::Full { k_adaptive: kernel(p)? }),
            [p] => Ok(ArchName::Partial {
                replaced: count(p)?,
                k_adaptive: default()?,
            }),
            [c, k] => Ok(ArchName::Partial {
                replaced: count(c)?,
                k_adaptive: kernel(k)?,
            }),
            _ => Err(bad("too many components")),
        }
    }

    pub fn k_adaptive(&self) -> Option<usize> {
        match *self {
            ArchName::Baseline => None,
            ArchName::Partial { k_adaptive, .. } | ArchName::Full { k_adaptive } => Some(k_adaptive),
        }
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchName::parse_with_default(s, None)
    }
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ArchName::Baseline => f.write_str("Baseline"),
            ArchName::Partial { replaced, k_adaptive: k } => write!(f, "AdaGAN-{replaced}-{k}x{k}"),
            ArchName::Full { k_adaptive: k } => write!(f, "AdaGAN-{k}x{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_format() {
        assert_eq!(ArchName::Baseline.to_string(), "Baseline");
        assert_eq!(ArchName::Full { k_adaptive: 5 }.to_string(), "AdaGAN-5x5");
        assert_eq!(
            ArchName::Partial {
                replaced: 1,
                k_adaptive: 3
            }
            .to_string(),
            "AdaGAN-1-3x3"
        );
    }

    #[test]
    fn names_round_trip() {
        for name in ["Baseline", "AdaGAN-1-3x3", "AdaGAN-2-5x5", "AdaGAN-3-1x1", "AdaGAN-7x7"] {
            assert_eq!(name.parse::<ArchName>().unwrap().to_string(), name);
        }
    }

    #[test]
    fn short_names_use_default_window() {
        assert_eq!(
            ArchName::parse_with_default("AdaGAN-2", Some(3)).unwrap(),
            ArchName::Partial {
                replaced: 2,
                k_adaptive: 3
            }
        );
        assert_eq!(
            ArchName::parse_with_default("AdaGAN", Some(5)).unwrap(),
            ArchName::Full { k_adaptive: 5 }
        );
        assert!("AdaGAN-2".parse::<ArchName>().is_err());
    }

    #[test]
    fn invalid_names() {
        for name in ["AdaGAN-9", "AdaGAN-0-3x3", "AdaGAN-4-3x3", "AdaGAN-3x5", "AdaGAN-2x2", "Adagan", "AdaGAN-1-3x3-1", ""] {
            assert!(
                matches!(ArchName::parse_with_default(name, Some(3)), Err(Error::Config(_))),
                "{name}"
            );
        }
    }
}
