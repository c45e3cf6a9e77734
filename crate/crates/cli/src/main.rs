//! `nhep`: exceptional-point sweeps, probes, line tracing and predictions
//! from a TOML run configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure.

mod commands;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Command, Format, RunConfig};
use output::{OutputSet, ResultManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] nhep::Error),
    #[error("numerical check failed: {0}")]
    Check(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Check(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nhep", version, about = "Exceptional points of interacting non-hermitian fermion chains")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory, overriding output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, csv+svg or csv+pgm, overriding output.format.
    #[arg(long)]
    format: Option<Format>,
    /// Disorder seed, overriding model.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Min-angle field on a (φ, U) grid.
    Sweep(RunArgs),
    /// Min angle around an ellipse in the (φ, U) plane.
    ProbeCircle(RunArgs),
    /// Min angle on an ellipsoid in (φ, Re U, Im U).
    ProbeSphere(RunArgs),
    /// Continue EP lines from seeds.
    Trace(RunArgs),
    /// Closed-form EP line predictions.
    Predict(RunArgs),
    /// Sweeps over disorder realizations with per-cell medians.
    Disorder(RunArgs),
    /// Quick numerical sanity checks.
    Selftest,
    /// Check an output directory against its manifest.
    Verify {
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    let (cmd, args) = match cli.command {
        Sub::Selftest => return pool.install(selftest::run),
        Sub::Verify { dir } => {
            let m = ResultManifest::validate(&dir)
                .map_err(|e| CliError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
            println!("{}: {} files verified", dir.display(), m.files.len());
            return Ok(());
        }
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::ProbeCircle(a) => (Command::ProbeCircle, a),
        Sub::ProbeSphere(a) => (Command::ProbeSphere, a),
        Sub::Trace(a) => (Command::Trace, a),
        Sub::Predict(a) => (Command::Predict, a),
        Sub::Disorder(a) => (Command::Disorder, a),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = args.out {
        cfg.output.directory = dir;
    }
    if let Some(f) = args.format {
        cfg.output.format = f;
    }
    if let Some(s) = args.seed {
        cfg.model.seed = s;
    }
    cfg.validate_for(cmd)?;

    let start = Instant::now();
    let mut set = OutputSet::create(&cfg.output.directory)?;
    let result = pool.install(|| commands::execute(cmd, &cfg, &mut set));
    let finished = result.and_then(|()| {
        let echo = serde_json::to_value(&cfg).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        ResultManifest::write(&set, cmd.name(), echo, workers, start.elapsed().as_secs_f64())
    });
    match finished {
        Ok(m) => {
            println!(
                "{}: wrote {} files to {}",
                cmd.name(),
                m.files.len() + 1,
                cfg.output.directory.display()
            );
            Ok(())
        }
        Err(e) => {
            set.discard();
            Err(e)
        }
    }
}
