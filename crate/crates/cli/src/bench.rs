//! The `bench` subcommand: wall-clock forward + backward time of single
//! adaptive blocks, naive against separable.

use std::time::Instant;

use adagan::adaconv::{adaconv_block, AdaConvParams, AdaConvSpec, Variant};
use adagan::{sample_gaussian, Error, Result, Rng, Tape};
use serde::Serialize;

pub const WARMUPS: usize = 2;
pub const MIN_RUNS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchCase {
    pub variant: Variant,
    pub k_filter: usize,
    pub k_adaptive: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub side: usize,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub case: BenchCase,
    pub runs: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Both variants for every `(K_a, C_in, C_out)` on `side × side` inputs.
pub fn default_grid(side: usize, batch: usize) -> Vec<BenchCase> {
    let mut grid = Vec::new();
    for (k_adaptive, c_in, c_out) in [(1, 16, 8), (3, 16, 8), (3, 64, 32), (5, 16, 8)] {
        for variant in [Variant::Naive, Variant::Separable] {
            grid.push(BenchCase {
                variant,
                k_filter: 3,
                k_adaptive,
                c_in,
                c_out,
                side,
                batch,
            });
        }
    }
    grid
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Times one case: `WARMUPS` untimed passes, then `runs` timed ones.
pub fn bench_case(case: &BenchCase, runs: usize, seed: u64) -> Result<BenchRow> {
    if runs < MIN_RUNS {
        return Err(Error::Config(format!("bench needs at least {MIN_RUNS} runs, got {runs}")));
    }
    let spec = AdaConvSpec::new(case.k_filter, case.k_adaptive, case.c_in, case.c_out, case.variant)?;
    spec.check_budget(case.batch, case.side, case.side)?;
    let mut rng = Rng::new(seed);
    let params = AdaConvParams::init(&spec, &mut rng)?;
    let x = sample_gaussian(&mut rng, &[case.batch, case.side, case.side, case.c_in])?;
    let pass = || -> Result<f64> {
        let start = Instant::now();
        let tape = Tape::new();
        let p = params.bind(&tape, true);
        let xv = tape.leaf(x.clone());
        let y = adaconv_block(&tape, xv, &p, &spec)?;
        let loss = tape.mean(y);
        tape.backward(loss)?;
        Ok(start.elapsed().as_secs_f64() * 1e3)
    };
    for _ in 0..WARMUPS {
        pass()?;
    }
    let mut times = (0..runs).map(|_| pass()).collect::<Result<Vec<f64>>>()?;
    times.sort_by(f64::total_cmp);
    Ok(BenchRow {
        case: *case,
        runs,
        median_ms: median(&times),
        min_ms: times[0],
        max_ms: times[runs - 1],
    })
}

pub fn cmd_bench(grid: &[BenchCase], runs: usize, seed: u64) -> Result<Vec<BenchRow>> {
    grid.iter().map(|case| bench_case(case, runs, seed)).collect()
}
