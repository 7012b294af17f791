//! `susyinv` command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on
//! config or runtime errors.

mod checks;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Common;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "susyinv", version, about = "Supersymmetric invariants and solvable partner Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized suites, overriding `[checks] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Negative control: use H+ where H- belongs.
    #[arg(long = "cross-check-wrong-H")]
    wrong_h: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write H-(t), U-(t) and the spectrum of I-(t).
    Build(Shared),
    /// Run the verification suites.
    Verify(Shared),
    /// Propagate a level and compare with its closed form.
    Propagate {
        #[command(flatten)]
        shared: Shared,
        /// Weight m (spin) or Fock index n (oscillator) of the bosonic state.
        #[arg(long, allow_hyphen_values = true)]
        level: Option<f64>,
    },
    /// Cyclic geometric phases of the invariant's eigenspaces.
    Phase {
        #[command(flatten)]
        shared: Shared,
        /// Restrict to one eigenspace of I-(0), ascending order.
        #[arg(long)]
        level: Option<usize>,
        /// Traverse the loop backwards.
        #[arg(long)]
        reverse: bool,
    },
    /// Repeat `verify` over the values in `[sweep]`.
    Sweep(Shared),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SUSYINV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SUSYINV_THREADS={raw:?} is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("SUSYINV_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn load(shared: &Shared) -> Result<(RunConfig, Common), CliError> {
    if !(shared.tolerance_scale > 0.0) {
        return Err(CliError::Config("--tolerance-scale must be positive".into()));
    }
    let mut cfg = RunConfig::load(&shared.config)?;
    if let Some(out) = &shared.out {
        cfg.out_dir = out.clone();
    }
    let common = Common { tolerance_scale: shared.tolerance_scale, wrong_h: shared.wrong_h, seed: shared.seed };
    Ok((cfg, common))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    match cli.command {
        Command::Build(s) => {
            let (cfg, _) = load(&s)?;
            commands::build(&cfg)
        }
        Command::Verify(s) => {
            let (cfg, common) = load(&s)?;
            commands::verify(&cfg, &common)
        }
        Command::Propagate { shared, level } => {
            let (cfg, common) = load(&shared)?;
            commands::propagate_level(&cfg, &common, level)
        }
        Command::Phase { shared, level, reverse } => {
            let (cfg, common) = load(&shared)?;
            commands::phase(&cfg, &common, level, reverse)
        }
        Command::Sweep(s) => {
            let (cfg, common) = load(&s)?;
            commands::sweep(&cfg, &common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
