use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLoss {
    /// `mean softplus(−D(G(z)))`.
    #[default]
    NonSaturating,
    /// `−mean softplus(D(G(z)))`, the negated fake term of the discriminator loss.
    Minimax,
}

impl std::str::FromStr for GeneratorLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-saturating" => Ok(GeneratorLoss::NonSaturating),
            "minimax" => Ok(GeneratorLoss::Minimax),
            other => Err(Error::Config(format!("unknown generator loss {other:?}"))),
        }
    }
}

impl std::fmt::Display for GeneratorLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorLoss::NonSaturating => "non-saturating",
            GeneratorLoss::Minimax => "minimax",
        })
    }
}

fn check_finite(tape: &Tape, logits: Var, iteration: u64, what: &str) -> Result<()> {
    if tape.value(logits).all_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            what: format!("non-finite {what} logits"),
        })
    }
}

/// `mean softplus(−real) + mean softplus(fake)`.
pub fn discriminator_loss(tape: &Tape, real: Var, fake: Var, iteration: u64) -> Result<Var> {
    check_finite(tape, real, iteration, "real")?;
    check_finite(tape, fake, iteration, "fake")?;
    let real_term = tape.mean(tape.softplus(tape.neg(real)));
    let fake_term = tape.mean(tape.softplus(fake));
    tape.add(real_term, fake_term)
}

pub fn generator_loss(tape: &Tape, fake: Var, kind: GeneratorLoss, iteration: u64) -> Result<Var> {
    check_finite(tape, fake, iteration, "fake")?;
    Ok(match kind {
        GeneratorLoss::NonSaturating => tape.mean(tape.softplus(tape.neg(fake))),
        GeneratorLoss::Minimax => tape.neg(tape.mean(tape.softplus(fake))),
    })
}
