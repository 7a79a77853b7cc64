use std::path::PathBuf;
use std::process::ExitCode;

use adagan::Result;
use adagan_cli::bench::{cmd_bench, default_grid, MIN_RUNS};
use adagan_cli::eval::{cmd_eval, cmd_eval_control, EvalConfig, GROUPS};
use adagan_cli::{audit, exit_code, train, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "adagan", version, about = "Adaptive-convolution GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Score a checkpoint with the two-sample proxy and mode coverage.
    Eval(EvalArgs),
    /// Print the per-layer cost model of an architecture.
    Audit(AuditArgs),
    /// Time naive and separable adaptive blocks.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// key = value file; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    k_adaptive: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// naive or separable weight regression.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    g_loss: Option<String>,
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    snapshot_every: Option<u64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut text = match &self.config {
            Some(path) => std::fs::read_to_string(path)?,
            None => String::new(),
        };
        text.push('\n');
        let overrides = [
            ("arch", self.arch.clone()),
            ("profile", self.profile.clone()),
            ("dataset", self.dataset.clone()),
            ("iterations", self.iters.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("batch_size", self.batch.map(|v| v.to_string())),
            ("k_adaptive", self.k_adaptive.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("variant", self.variant.clone()),
            ("g_loss", self.g_loss.clone()),
            ("log_every", self.log_every.map(|v| v.to_string())),
            ("snapshot_every", self.snapshot_every.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                text += &format!("{key} = {v}\n");
            }
        }
        ExperimentConfig::parse(&text)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "control")]
    checkpoint: Option<PathBuf>,
    /// Score real images against disjoint real images instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    control: bool,
    /// Image side for --control.
    #[arg(long, default_value_t = 16)]
    side: usize,
    /// Reject the checkpoint unless it holds this architecture.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long, default_value = "shapes")]
    dataset: String,
    #[arg(long, default_value_t = 3000)]
    dataset_size: usize,
    /// Images per class per group.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = GROUPS)]
    groups: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = "AdaGAN-3x3")]
    arch: String,
    #[arg(long, default_value = "paper")]
    profile: String,
    #[arg(long)]
    k_adaptive: Option<usize>,
    #[arg(long, default_value_t = 4)]
    m_g: usize,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 8)]
    side: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = MIN_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable report"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            let outcome = train::cmd_train(&cfg, args.resume.as_deref())?;
            println!(
                "trained {} to iteration {}; {} checkpoint(s) in {}",
                cfg.arch,
                outcome.iterations,
                outcome.checkpoints.len(),
                cfg.out.display()
            );
        }
        Command::Eval(args) => {
            let expect = args
                .arch
                .as_deref()
                .map(str::parse::<adagan::zoo::ArchName>)
                .transpose()?;
            let cfg = EvalConfig {
                groups: args.groups,
                samples: args.samples,
                seed: args.seed,
            };
            let dataset = args.dataset.parse()?;
            let report = match &args.checkpoint {
                Some(path) => cmd_eval(path, expect.as_ref(), &dataset, args.dataset_size, &cfg)?,
                None => cmd_eval_control(&dataset, args.dataset_size, args.side, &cfg)?,
            };
            print_json(&report);
        }
        Command::Audit(args) => {
            let arch = adagan::zoo::ArchName::parse_with_default(&args.arch, args.k_adaptive)?;
            let report = audit::cmd_audit(&arch, args.profile.parse()?, args.m_g, args.k_adaptive)?;
            if args.json {
                print_json(&report);
            } else {
                print!("{}", report.table());
            }
        }
        Command::Bench(args) => {
            for row in cmd_bench(&default_grid(args.side, args.batch), args.runs, args.seed)? {
                print_json(&row);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
