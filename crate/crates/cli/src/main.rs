//! Command-line harness around the holobeam-core solver: convergence runs,
//! parameter sweeps, a self-check battery, and far-field pattern export.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 configuration error,
//! 3 numeric failure (scenario build or solver), 4 validation failure.

// Validation guards are written as `!(x > 0.0)` on purpose: unlike
// `x <= 0.0`, the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod runner;

use clap::{Parser, Subcommand};
use config::{ConfigError, SystemConfig};
use runner::{HarnessError, SweepAxis};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "holobeam",
    version,
    about = "Coupling-aware RHS beamforming experiments"
)]
struct Cli {
    /// Path to a JSON config file. Defaults to the built-in reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV and metadata files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Replace the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated scheme list overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    schemes: Option<Vec<String>>,

    /// Run cells sequentially instead of in parallel.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration convergence traces for every (scheme, seed) cell.
    Run,
    /// Final metrics across a parameter axis (pbs, xi_fs or rhs_size).
    Sweep {
        /// Sweep axis: pbs, xi_fs or rhs_size.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Run the cross-module self-check battery and report PASS/FAIL lines.
    Validate,
    /// Export far-field gain cuts under three coupling models.
    Pattern,
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

fn load_config(cli: &Cli) -> Result<SystemConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(schemes) = &cli.schemes {
        cfg.schemes = schemes.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &SystemConfig) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Run => runner::run_convergence(cfg, &cli.out, cli.serial),
        Command::Sweep { axis, values } => {
            let axis = SweepAxis::parse(axis).ok_or_else(|| {
                HarnessError::Validation(format!(
                    "unknown sweep axis `{axis}` (expected pbs, xi_fs or rhs_size)"
                ))
            })?;
            runner::run_sweep(cfg, axis, values.clone(), &cli.out, cli.serial)
        }
        Command::Validate => runner::run_validate(cfg.seeds[0]),
        Command::Pattern => runner::run_pattern(cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match dispatch(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                HarnessError::Io(_) => ExitCode::from(EXIT_IO),
                HarnessError::Numeric(_) => ExitCode::from(EXIT_NUMERIC),
                // A failed check battery is a validation failure; validation
                // errors elsewhere (bad sweep axis/values) are config misuse.
                HarnessError::Validation(_) => {
                    if matches!(cli.command, Command::Validate) {
                        ExitCode::from(EXIT_VALIDATION)
                    } else {
                        ExitCode::from(EXIT_CONFIG)
                    }
                }
            }
        }
    }
}
