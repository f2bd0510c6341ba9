//! `qan`: batch front-end for the access-network simulator.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Parser)]
#[command(name = "qan", version, about = "Multi-user quantum access network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; a directory for `simulate`, a file otherwise (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table format (default csv). For `simulate`, `csv` also writes an events.csv mirror.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate detection events for the configured transmitters.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Recover the clock, demarcate slots and identify every transmitter.
    Sync {
        #[command(flatten)]
        common: Common,
        /// Event file (binary, or CSV mirror when the name ends in .csv).
        #[arg(long)]
        events: PathBuf,
        /// Public sync strings; regenerated from the scenario when omitted.
        #[arg(long)]
        codes: Option<PathBuf>,
    },
    /// Secure key rate from a tally CSV, or from a full seeded pipeline run.
    Keyrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tally: Option<PathBuf>,
        /// Writes the tally used (a directory of per-user files in pipeline mode).
        #[arg(long)]
        export_tally: Option<PathBuf>,
    },
    /// Per-user key rate over a sweep of user counts and distances.
    Capacity {
        #[command(flatten)]
        common: Common,
    },
    /// Jitter error rate, or the widest jitter meeting an error budget.
    Jitter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frequency_hz: Option<f64>,
        #[arg(long, conflicts_with = "fwhm_ps")]
        e_max: Option<f64>,
        #[arg(long)]
        fwhm_ps: Option<f64>,
    },
    /// Adjacent-slot cross-talk measurement.
    Crosstalk {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Identification(String),
    ZeroRate(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Identification(_) => 3,
            Failure::ZeroRate(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Identification(m) => write!(f, "identification failed: {m}"),
            Failure::ZeroRate(m) => write!(f, "zero key rate: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<qan_core::Error> for Failure {
    fn from(e: qan_core::Error) -> Self {
        use qan_core::Error as E;
        match e {
            E::Parameter(_) | E::Config(_) | E::Format(_) => Failure::Config(e.to_string()),
            E::ClockNotFound(_)
            | E::Refinement { .. }
            | E::Demarcation(_)
            | E::IdentificationFailed { .. }
            | E::AmbiguousIdentification { .. }
            | E::UnidentifiedSlot(_) => Failure::Identification(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Sync { common, events, codes } => commands::sync(&common, &events, codes.as_deref()),
        Command::Keyrate {
            common,
            tally,
            export_tally,
        } => commands::keyrate(&common, tally.as_deref(), export_tally.as_deref()),
        Command::Capacity { common } => commands::capacity(&common),
        Command::Jitter {
            common,
            frequency_hz,
            e_max,
            fwhm_ps,
        } => commands::jitter(&common, frequency_hz, e_max, fwhm_ps),
        Command::Crosstalk { common } => commands::crosstalk(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qan: {e}");
            ExitCode::from(e.code())
        }
    }
}
