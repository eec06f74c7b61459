use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result, anyhow};
use clap::{Parser, Subcommand};

use fedrank_cli::commands;
use fedrank_cli::config::RawConfig;

/// Deterministic federated-learning incentive experiments.
#[derive(Parser)]
#[command(name = "fedrank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (flat key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for client updates (default: all cores). Outputs are
    /// byte-identical regardless.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run federated training and write rounds.csv + summary.json.
    Simulate(RunArgs),
    /// Analyze one utility parameterization: curves, condition checks,
    /// optimal contributions.
    Analyze(RunArgs),
    /// Best-response dynamics, Nash verification, mechanism comparison.
    Game(RunArgs),
    /// Run the built-in property suite; nonzero exit on any failure.
    Verify {
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore the error if a pool already exists (tests call this twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn prepare(args: &RunArgs) -> Result<(RawConfig, PathBuf)> {
    init_threads(args.threads);
    let mut raw = RawConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        raw.set("seed", seed.to_string());
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| raw.get("out_dir").map(PathBuf::from))
        .ok_or_else(|| {
            anyhow!("missing output directory: set `out_dir` in the config or pass --out")
        })?;
    Ok((raw, out_dir))
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => {
            let (raw, out_dir) = prepare(&args)?;
            let report = commands::simulate::run(&raw, &out_dir)
                .with_context(|| format!("simulate with {}", args.config.display()))?;
            report.announce();
            Ok(true)
        }
        Command::Analyze(args) => {
            let (raw, out_dir) = prepare(&args)?;
            let report = commands::analyze::run(&raw, &out_dir)
                .with_context(|| format!("analyze with {}", args.config.display()))?;
            report.announce();
            Ok(true)
        }
        Command::Game(args) => {
            let (raw, out_dir) = prepare(&args)?;
            let report = commands::game::run(&raw, &out_dir)
                .with_context(|| format!("game with {}", args.config.display()))?;
            report.announce();
            Ok(true)
        }
        Command::Verify { threads } => {
            init_threads(threads);
            Ok(commands::verify::run())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
