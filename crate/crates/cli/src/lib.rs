//! `qsflow`: configuration-driven verification and simulation runs.
//!
//! Each subcommand reads one JSON config, runs the corresponding checks and
//! writes a report. Exit codes: 0 when every check passes, 1 when a check
//! fails, 2 for usage, configuration or input errors.

mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use output::Outcome;

#[derive(Debug, Parser)]
#[command(name = "qsflow", version, about = "Quantum stochastic CP flow laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    VerifyAlgebra,
    WeylCheck,
    Germ,
    Dilate,
    Simulate,
    Semigroup,
    Genfun,
    Crosscheck,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Itô-algebra axioms and the Weyl semigroup law on random samples.
    VerifyAlgebra(Args),
    /// Weyl semigroup law on given cases and random draws.
    WeylCheck(Args),
    /// Germ matrix, CCP verdict, dissipativity class and gauge fixing.
    Germ(Args),
    /// Choi/Kraus round trip, gauge fixing and unitary completion.
    Dilate(Args),
    /// Monte Carlo ensemble of diffusive or jump trajectories.
    Simulate(Args),
    /// Vacuum semigroup at a list of times.
    Semigroup(Args),
    /// Generating-function kernel positivity.
    Genfun(Args),
    /// Agreement of the semigroup, propagator, Picard and trajectory routes.
    Crosscheck(Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Overrides the seed of seeded commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for trajectory ensembles (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Failure modes that map to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad flags, unreadable input, invalid model data.
    Usage(String),
    /// Output could not be written.
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) => f.write_str(msg),
        }
    }
}

impl From<qsflow_core::Error> for CliError {
    fn from(e: qsflow_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl Command {
    fn split(&self) -> (CommandKind, &Args) {
        match self {
            Command::VerifyAlgebra(a) => (CommandKind::VerifyAlgebra, a),
            Command::WeylCheck(a) => (CommandKind::WeylCheck, a),
            Command::Germ(a) => (CommandKind::Germ, a),
            Command::Dilate(a) => (CommandKind::Dilate, a),
            Command::Simulate(a) => (CommandKind::Simulate, a),
            Command::Semigroup(a) => (CommandKind::Semigroup, a),
            Command::Genfun(a) => (CommandKind::Genfun, a),
            Command::Crosscheck(a) => (CommandKind::Crosscheck, a),
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("qsflow: {e}");
            2
        }
    }
}

/// Run one command and write its output; `Ok(pass)` on completion.
pub fn run(kind: CommandKind, args: &Args) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let pool = match args.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?,
        ),
        None => None,
    };
    let outcome = match &pool {
        Some(pool) => pool.install(|| commands::dispatch(kind, &text, args)),
        None => commands::dispatch(kind, &text, args),
    }?;
    output::write(kind, args, &outcome)?;
    Ok(outcome.pass)
}
