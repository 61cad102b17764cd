use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use optoshake_cli::commands;
use optoshake_cli::config::{parse_sweep_flag, RunConfig};
use optoshake_cli::errors::{AppError, Result};

/// Covariance dynamics of an optomechanical cavity under drive-frequency
/// modulation: simulations, sweeps, stability maps and sideband-model
/// comparisons driven by TOML configurations.
#[derive(Parser)]
#[command(name = "optoshake", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one working point and write the covariance trace.
    Simulate(CommonArgs),
    /// Scan one parameter; report stability and steady averages per point.
    Sweep(CommonArgs),
    /// Classify stability over a 2-parameter grid and refine the boundary.
    StabilityMap(CommonArgs),
    /// Compare the modulated model against its single-sideband reduction.
    RwaCompare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads for multi-point tasks (default: all cores).
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Sweep axis NAME=START:STOP:COUNT[:SCALE]; overrides the config and
    /// may repeat once more to set the second map axis.
    #[arg(long = "sweep", value_name = "AXIS")]
    sweep: Vec<String>,
}

fn apply_overrides(config: &mut RunConfig, args: &CommonArgs, sweep_axes: usize) -> Result<()> {
    if let Some(n) = args.parallel {
        if n == 0 {
            return Err(AppError::Config("--parallel must be at least 1".into()));
        }
        config.output.parallel = Some(n);
    }
    if args.sweep.len() > sweep_axes {
        return Err(AppError::Config(match sweep_axes {
            0 => "this subcommand takes no --sweep flag".into(),
            1 => "sweep takes one --sweep flag; stability-map takes two".into(),
            _ => "at most two --sweep flags are supported".into(),
        }));
    }
    let mut flags = args.sweep.iter();
    if let Some(text) = flags.next() {
        config.task.sweep = Some(parse_sweep_flag(text)?);
    }
    if let Some(text) = flags.next() {
        config.task.sweep2 = Some(parse_sweep_flag(text)?);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let (args, sweep_axes): (&CommonArgs, usize) = match &cli.command {
        Command::Simulate(a) => (a, 0),
        Command::Sweep(a) => (a, 1),
        Command::StabilityMap(a) => (a, 2),
        Command::RwaCompare(a) => (a, 0),
    };
    let mut config = RunConfig::from_path(&args.config)?;
    apply_overrides(&mut config, args, sweep_axes)?;
    std::fs::create_dir_all(&args.out)?;
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&config, &args.out),
        Command::Sweep(_) => commands::sweep(&config, &args.out),
        Command::StabilityMap(_) => commands::stability_map(&config, &args.out),
        Command::RwaCompare(_) => commands::rwa_compare(&config, &args.out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
