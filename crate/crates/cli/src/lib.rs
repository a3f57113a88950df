//! Scenario-driven front end for `netguard-core`: validation, analysis, simulation, detection
//! and identification with CSV traces and JSON verdicts.

pub mod commands;
pub mod scenario;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use commands::{run_command, CommandOutput};
pub use scenario::{Mode, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVALID_MATRIX: i32 = 2;
pub const EXIT_AMBIGUOUS: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;
pub const EXIT_PENDING: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] netguard_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use netguard_core::Error as E;
        match self {
            CliError::Core(
                E::NotSquare { .. } | E::NonFinite { .. } | E::NegativeEntry { .. } | E::RowSum { .. } | E::Reducible | E::Imprimitive,
            ) => EXIT_INVALID_MATRIX,
            CliError::Core(E::CalibrationFailure { .. }) => EXIT_CALIBRATION,
            _ => EXIT_ERROR,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "netguard", version, about = "Consensus networks with faulty and malicious agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory for trace.csv, verdict.json and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a matrix is a consensus matrix, property by property.
    Validate {
        /// Matrix file (text rows or JSON array of rows).
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Connectivity, resilience bounds and pencil analysis of selected (K, j) pairs.
    Analyze(ScenarioArgs),
    /// Simulate the attacked network.
    Simulate(ScenarioArgs),
    /// Run the asymptotic detection filter at the observer.
    Detect(ScenarioArgs),
    /// Complete identification at the observer.
    Identify(ScenarioArgs),
    /// Local identification inside one block of a weakly coupled network.
    LocalIdentify(ScenarioArgs),
}

/// Writes the produced artifacts into `dir`.
pub fn write_outputs(out: &CommandOutput, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let files = [("trace.csv", &out.trace), ("verdict.json", &out.verdict), ("report.json", &out.report)];
    for (name, body) in files {
        if let Some(body) = body {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (result, out_dir) = match cli.command {
        Command::Validate { matrix, scenario } => (commands::validate(matrix.as_deref(), scenario.as_deref()), None),
        Command::Analyze(a) => (dispatch(Mode::Analyze, &a), a.out),
        Command::Simulate(a) => (dispatch(Mode::Simulate, &a), a.out),
        Command::Detect(a) => (dispatch(Mode::Detect, &a), a.out),
        Command::Identify(a) => (dispatch(Mode::Identify, &a), a.out),
        Command::LocalIdentify(a) => (dispatch(Mode::LocalIdentify, &a), a.out),
    };
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            if let Some(dir) = out_dir {
                if let Err(e) = write_outputs(&out, &dir) {
                    eprintln!("error: {e}");
                    return e.exit_code();
                }
            }
            out.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(mode: Mode, args: &ScenarioArgs) -> Result<CommandOutput, CliError> {
    let (scenario, base) = Scenario::load(&args.scenario)?;
    run_command(mode, scenario, &base, args.seed)
}
