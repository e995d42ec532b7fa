//! Command-line driver: scenario files in, reports, CSV traces and SVG plots
//! out.
//!
//! Exit codes: 0 success or BPE, 2 analysis negative, 3 gain condition
//! violated, 4 bearing loss, 64 usage or parse error, 1 anything else (I/O).

pub mod commands;
pub mod output;
pub mod perturb;
pub mod plot;
pub mod scenario;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use bearing_forms::{PeError, SimError, TrajectoryError};
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::{
    cmd_analyze, cmd_observe, cmd_scenarios_export, cmd_scenarios_list, cmd_simulate, RunFlags,
};
use crate::scenario::ParseError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_GAIN_VIOLATION: i32 = 3;
pub const EXIT_BEARING_LOSS: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable supplying the default `--jobs`.
pub const JOBS_ENV: &str = "BEARING_FORMS_JOBS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("parse error at {0}")]
    Parse(ParseError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(
        "gain condition violated: k_d = {k_d} must exceed {required} (use --force to run anyway)"
    )]
    GainViolation { k_d: f64, required: f64 },
    #[error("{0}")]
    BearingLoss(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) | CliError::Invalid(_) => EXIT_USAGE,
            CliError::GainViolation { .. } => EXIT_GAIN_VIOLATION,
            CliError::BearingLoss(_) => EXIT_BEARING_LOSS,
            CliError::Io(_) | CliError::Numeric(_) => EXIT_FAILURE,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BearingLoss { .. } => CliError::BearingLoss(e.to_string()),
            SimError::GainConditionViolated { k_d, required } => {
                CliError::GainViolation { k_d, required }
            }
            SimError::InvalidGain(_) | SimError::InvalidInput(_) => {
                CliError::Invalid(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<PeError> for CliError {
    fn from(e: PeError) -> Self {
        match e {
            PeError::InvalidWindow { .. } => CliError::Invalid(format!("[pe] {e}")),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bearing-forms",
    version,
    about = "Bearing persistence-of-excitation analysis and bearing-only formation control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks, rank history, PE certificate and BPE verdict.
    Analyze {
        /// Scenario file, or the name of a built-in scenario.
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-loop simulation; writes trace.csv and SVG plots.
    Simulate {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Overrides the perturbation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run even when the double-integrator gain condition fails.
        #[arg(long)]
        force: bool,
    },
    /// Bearing-only position observer on the scenario's desired motion.
    Observe {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Norm of a seeded, centred initial estimate error.
        #[arg(long)]
        zeta0: Option<f64>,
    },
    /// List or export the built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
    /// Grid sweep over k_p, k_d, fraction, dt or seed.
    Sweep {
        scenario: String,
        /// Axis as name=v1,v2,... or name=start:stop:count; repeatable.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
        /// Worker threads (default: $BEARING_FORMS_JOBS, else available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Terminal error below which a run counts as converged.
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenariosAction {
    List,
    /// Print a built-in scenario file byte-exactly.
    Export {
        name: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn default_jobs() -> Result<usize, CliError> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&j| j > 0)
            .ok_or_else(|| CliError::Usage(format!("{JOBS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze { scenario, out } => Ok(cmd_analyze(&scenario, &out)?.0),
        Command::Simulate {
            scenario,
            out,
            dt,
            horizon,
            seed,
            force,
        } => {
            let flags = RunFlags {
                out,
                dt,
                horizon,
                seed,
                force,
            };
            Ok(cmd_simulate(&scenario, &flags)?.0)
        }
        Command::Observe {
            scenario,
            out,
            dt,
            horizon,
            seed,
            zeta0,
        } => {
            let flags = RunFlags {
                out,
                dt,
                horizon,
                seed,
                force: false,
            };
            Ok(cmd_observe(&scenario, &flags, zeta0)?.0)
        }
        Command::Scenarios { action } => match action {
            ScenariosAction::List => {
                print!("{}", cmd_scenarios_list());
                Ok(EXIT_OK)
            }
            ScenariosAction::Export { name, output } => {
                let text = cmd_scenarios_export(&name)?;
                match output {
                    Some(p) => output::write_file(&p, text.as_bytes())?,
                    None => print!("{text}"),
                }
                Ok(EXIT_OK)
            }
        },
        Command::Sweep {
            scenario,
            grid,
            jobs,
            tol,
            horizon,
            out,
        } => {
            let jobs = match jobs {
                Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
                Some(j) => j,
                None => default_jobs()?,
            };
            sweep::cmd_sweep(&scenario, &grid, jobs, tol, horizon, &out)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(run(["bearing-forms", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            run(["bearing-forms", "scenarios", "export", "tetra"]),
            EXIT_USAGE
        );
        assert_eq!(run(["bearing-forms", "--help"]), EXIT_OK);
        assert_eq!(
            CliError::GainViolation {
                k_d: 1.0,
                required: 2.0
            }
            .exit_code(),
            EXIT_GAIN_VIOLATION
        );
        assert_eq!(
            CliError::BearingLoss("x".into()).exit_code(),
            EXIT_BEARING_LOSS
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
