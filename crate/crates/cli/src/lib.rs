//! Command-line front end: config parsing, the four commands and their
//! report formats.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 config or usage error, 3 model error or
//! failed premise, 4 table precondition, 5 enumeration size guard.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::io::Write;
use std::path::PathBuf;

use bell_lab::tables::KeyMode;
use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{exit, CliError};

pub const THREADS_ENV: &str = "BELL_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "bell-lab",
    version,
    about = "EPR-Bohm hidden-variable simulation and verification lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment and write its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for output files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// CHSH and three-setting Bell verdicts.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = commands::Reference::Model)]
        reference: commands::Reference,
    },
    /// Reorder a simulated log into an outcome table.
    Tables {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "lambda")]
        key_mode: KeyMode,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Exact computations.
    Oracle {
        #[command(subcommand)]
        op: OracleOp,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleOp {
    /// Maximum |Δ| over deterministic strategies with m source values.
    Enumerate {
        #[arg(long)]
        m: usize,
        /// Settings per station.
        #[arg(long, default_value_t = 2)]
        settings: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact Δ of the configured model.
    Exact {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singlet Δ at a setting quad.
    Quantum {
        /// Degrees `a,b,c,d`; defaults to the config's quad, else 0,45,135,90.
        #[arg(long, allow_hyphen_values = true)]
        angles: Option<String>,
        #[arg(long, conflicts_with = "angles")]
        config: Option<PathBuf>,
        /// Also writes the angle/correlation curve here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sizes the global thread pool from `BELL_LAB_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV}={value:?}: expected a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out: dir } => {
            let config = ExperimentConfig::load(&config)?;
            commands::cmd_simulate(&config, &dir, out).map(drop)
        }
        Command::Check { config, reference } => {
            let config = ExperimentConfig::load(&config)?;
            commands::cmd_check(&config, reference, out)
        }
        Command::Tables {
            config,
            key_mode,
            out: dir,
        } => {
            let config = ExperimentConfig::load(&config)?;
            commands::cmd_tables(&config, key_mode, &dir, out).map(drop)
        }
        Command::Oracle { op } => {
            let (report, dir) = match op {
                OracleOp::Enumerate { m, settings, out } => {
                    (commands::oracle_enumerate(m, settings)?, out)
                }
                OracleOp::Exact { config, out } => (
                    commands::oracle_exact(&ExperimentConfig::load(&config)?)?,
                    out,
                ),
                OracleOp::Quantum {
                    angles,
                    config,
                    out,
                } => {
                    let quad = match (angles, config) {
                        (Some(a), _) => commands::parse_angles(&a)?,
                        (None, Some(path)) => ExperimentConfig::load(&path)?.quad,
                        (None, None) => commands::canonical_degrees(),
                    };
                    (commands::oracle_quantum(quad), out)
                }
            };
            commands::write_oracle_report(&report, dir.as_deref(), out)
        }
    }
}
