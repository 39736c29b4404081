use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use extremes_cli::{execute, Command, RunConfig, EXIT_CONFIG};

/// Simulate MidExtremes / ApproachExtreme consensus in dynamic networks.
#[derive(Debug, Parser)]
#[command(name = "extremes", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON scenario config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Where to write the trace CSV.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Root seed, overriding the config's.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Number of trials (per cell for sweeps).
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Dotted-path override such as `scenario.n=5`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the configured scenario.
    Simulate,
    /// Randomized trials checking the rate bounds.
    Fuzz,
    /// Check a graph file against its claimed model.
    VerifyModel,
    /// Run the Byzantine safe-area scenario.
    Byzantine,
    /// Run every cell of the configured grid.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Fuzz => Command::Fuzz,
        Cmd::VerifyModel => Command::VerifyModel,
        Cmd::Byzantine => Command::Byzantine,
        Cmd::Sweep => Command::Sweep,
    };
    let run = RunConfig {
        command,
        config_path: cli.config,
        overrides: cli.set,
        out_path: cli.out,
        seed: cli.seed,
        trials: cli.trials,
    };
    let outcome = execute(&run);
    if !outcome.stdout.is_empty() {
        println!("{}", outcome.stdout);
    }
    if !outcome.stderr.is_empty() {
        eprintln!("{}", outcome.stderr);
    }
    ExitCode::from(outcome.code as u8)
}
