use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use revsync::runner;

/// Sensor-network time-synchronization experiments: deterministic
/// simulation runs, parameter sweeps, and Monte-Carlo estimator benchmarks.
///
/// Delay models follow the estimators' assumptions exactly; in particular,
/// sampled delays are never clamped at zero.
#[derive(Parser)]
#[command(name = "revsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config seed (sweeps use it as the base seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the one-line summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the single run described by the config's top-level keys.
    Run {
        config: PathBuf,
        /// Output directory for run_report.csv (and trace.csv when enabled).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Execute the config's [sweep] grid across schemes, intervals, bundle
    /// sizes, and seeds.
    Sweep {
        config: PathBuf,
        /// Output directory for sweep_rows.csv and sweep_aggregate.csv.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the config's [bench] Monte-Carlo estimator comparison.
    Bench {
        config: PathBuf,
        /// Output directory for mse_vs_k.csv.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, output } => runner::cmd_run(config, output, cli.seed, cli.quiet),
        Command::Sweep { config, output } => {
            runner::cmd_sweep(config, output, cli.seed, cli.quiet)
        }
        Command::Bench { config, output } => {
            runner::cmd_bench(config, output, cli.seed, cli.quiet)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("revsync: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
