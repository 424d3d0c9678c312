//! Command-line front end: one TOML config per run, one output bundle.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

mod commands;
pub mod config;
pub mod report;
pub mod svg;

pub use commands::{inverse_pair_error, orbit_representatives, ORBIT_COLUMNS, PENDULUM_SLOPE_BAND};
pub use config::{validate, Command, Overrides, RunConfig};
pub use report::{verify_manifest, Manifest, ReportBundle, SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "revlab", version, about = "Reversible planar maps: symmetric orbits, resonance normal forms, invariant curves")]
pub struct Args {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for data files, figures and the manifest.
    #[arg(long, default_value = "revlab-out")]
    pub out: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `threads` in the config.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub summary: String,
}

/// Run a validated config, writing the bundle under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Validation(vec![format!("threads: {e}")]))?;
    let mut bundle = ReportBundle::create(out, cfg)?;
    let summary = pool.install(|| commands::run(cfg, &mut bundle))?;
    let manifest = bundle.finish(cfg, start.elapsed().as_secs_f64() * 1e3)?;
    Ok(RunOutcome { manifest, summary })
}

/// Read, validate and run a config file.
pub fn run_file(path: &Path, overrides: &Overrides, out: &Path) -> Result<RunOutcome, CliError> {
    let text = std::fs::read_to_string(path)?;
    let cfg = validate(&text, overrides).map_err(CliError::Validation)?;
    run(&cfg, out)
}

pub fn main_with(args: Args) -> i32 {
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let overrides = Overrides { seed: args.seed, threads: args.threads };
    match run_file(&args.config, &overrides, &args.out) {
        Ok(o) => {
            println!("{}", o.summary);
            println!("wrote {} file(s) to {}", o.manifest.files.len() + 2, args.out.display());
            0
        }
        Err(e) => {
            eprintln!("revlab: {e}");
            e.exit_code()
        }
    }
}
