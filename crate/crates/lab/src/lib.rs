//! Batch front-end for the chernoff-core laboratory.
//!
//! Each command reads one JSON config, writes CSV tables and JSON reports to an
//! output directory, and finishes with `manifest.json`, which records the seed,
//! the thread count, wall times and the SHA-256 of the config and every output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::path::PathBuf;
use std::time::Instant;

use chernoff_core::Exec;
use serde::Serialize;

pub use config::{ExperimentConfig, LoadedConfig};
pub use error::RunError;
use output::{sha256_hex, FileEntry, Outputs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Overrides the output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "LAB_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Curvature,
    Bounds,
    Simulate,
    Elo,
    Verify,
}

/// One pass/fail outcome recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Command,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    pub config_sha256: String,
    pub outputs: Vec<FileEntry>,
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
    pub exit_code: u8,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub out: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        self.manifest.exit_code
    }
}

/// Runs one command end to end. Failed checks are not errors: they set exit code 3.
pub fn run(opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let cfg = match &opts.config {
        Some(path) => LoadedConfig::from_file(path)?,
        None if opts.command == Command::Verify => LoadedConfig::from_text("{}")?,
        None => return Err(RunError::Config(format!("`{:?}` needs --config", opts.command).to_lowercase())),
    };
    let seed = opts.seed.or(cfg.config.seed).or_else(|| elo_seed(&cfg)).unwrap_or(0);
    let threads = opts
        .threads
        .or(cfg.config.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if threads == 0 {
        return Err(RunError::Config("thread count must be positive".into()));
    }
    let exec = Exec::with_threads(threads);
    let mut out = Outputs::new(&opts.out)?;

    let checks = match opts.command {
        Command::Curvature => commands::curvature(&cfg, &exec, &mut out)?,
        Command::Bounds => commands::bounds(&cfg, &exec, &mut out)?,
        Command::Simulate => commands::simulate(&cfg, seed, &exec, &mut out)?,
        Command::Elo => commands::elo(&cfg, seed, &exec, &mut out)?,
        Command::Verify => commands::verify(&cfg, seed, &exec, &mut out)?,
    };
    let exit_code = if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_VERIFICATION };
    let manifest = RunManifest {
        command: opts.command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        threads,
        parallel: exec.is_parallel(),
        config_sha256: sha256_hex(&cfg.raw),
        outputs: out.files.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
        checks,
        exit_code,
    };
    out.manifest(&manifest)?;
    Ok(RunOutcome { manifest, out: opts.out.clone() })
}

fn elo_seed(cfg: &LoadedConfig) -> Option<u64> {
    cfg.config.elo.as_ref()?.get("seed")?.as_u64()
}
