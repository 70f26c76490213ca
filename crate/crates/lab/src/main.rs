use std::path::PathBuf;
use std::process::ExitCode;

use chernoff_lab::{run, Command, RunOptions, OUT_DIR_ENV};
use clap::Parser;

/// Experiment runner: curvature profiles, tail bounds, Monte Carlo dominance,
/// Elo tracking and the verification suite.
#[derive(Parser, Debug)]
#[command(name = "lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config document (optional for `verify`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to $LAB_OUT_DIR, then `lab-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(chernoff_lab::EXIT_CONFIG);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let out = cli
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lab-out"));
    let opts = RunOptions { command: cli.command, config: cli.config, out, seed: cli.seed, threads: cli.threads };
    match run(&opts) {
        Ok(outcome) => {
            for c in &outcome.manifest.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} files to {}", outcome.manifest.outputs.len() + 1, outcome.out.display());
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
