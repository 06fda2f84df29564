mod design;
mod format;
mod report;
mod sensitivity;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dpfc", version)]
#[command(about = "Differentially private formation control: simulation, bounds and design")]
struct Cli {
    /// Worker threads for Monte Carlo trials (default: available parallelism)
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the private formation protocol and write trajectory and summary CSVs
    Simulate(simulate::Args),
    /// Every steady-state error bound for a configuration, next to the exact value
    Bounds(report::Args),
    /// Smallest ε that certifies a required steady-state error
    Design(design::Args),
    /// Error bound over an (ε, λ2) grid
    Sweep(sweep::Args),
    /// Sensitivity of the error bound to ε versus λ2
    Sensitivity(sensitivity::Args),
}

/// Shared `--config` flag; without it the built-in five-agent star demo is used.
#[derive(clap::Args, Debug, Clone)]
pub struct ConfigArg {
    /// YAML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    pub fn load(&self) -> anyhow::Result<dpfc::config::RunConfig> {
        Ok(match &self.config {
            // Read here so a missing file is an I/O failure, not a config error.
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                dpfc::config::RunConfig::from_yaml_str(&text)?
            }
            None => dpfc::config::RunConfig::demo(),
        })
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.into())
            .build_global()?;
    }
    match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::Bounds(args) => report::run(&args),
        Command::Design(args) => design::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Sensitivity(args) => sensitivity::run(&args),
    }
}

/// 2 for invalid input, 3 for numerical failure, 1 for anything else (I/O).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<dpfc::Error>()) {
        Some(e) if e.is_validation() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
