//! `harnack`: constants, verification suites and solver experiments from a
//! JSON config. Exit codes: 0 pass, 1 config error, 2 hypothesis violation,
//! 3 infeasible discretization, 4 verification failure.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harnack_core::Error;

use commands::Overrides;
use config::{RunConfig, Which};

#[derive(Parser, Debug)]
#[command(name = "harnack", version, about = "Harnack inequality verification for Kolmogorov-type operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; the prototype H1 setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Swap in constants or geometry that should make the checks fail.
    #[arg(long, global = true)]
    adversarial: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Structural constants report.
    Constants,
    /// Sampling and quadrature suites: group, covariance, kernels, geometry,
    /// potentials or all. Falls back to the config's suite list.
    Verify { suites: Vec<String> },
    /// Solver experiment.
    Experiment {
        #[arg(value_enum)]
        which: Which,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Hypothesis(String),
    Io(String),
    Core(Error),
}

impl CliError {
    /// Library errors raised while building the structure or the field are
    /// config errors unless they name a hypothesis.
    fn from_config(e: Error) -> Self {
        match e {
            Error::H1Violated { .. } | Error::ModulusTooLarge { .. } => CliError::Core(e),
            other => CliError::Config(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Hypothesis(_) => 2,
            CliError::Core(e) => match e {
                Error::H1Violated { .. } | Error::ModulusTooLarge { .. } => 2,
                Error::Infeasible(_) => 3,
                Error::EmptyStructure
                | Error::BadBlockSizes(_)
                | Error::ShapeMismatch { .. }
                | Error::RankDeficient { .. }
                | Error::BadEllipticity { .. }
                | Error::InadmissibleDiffusion(_)
                | Error::InvalidParameter(_) => 1,
                _ => 4,
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Hypothesis(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = RunConfig::read(cli.config.as_deref())?;
    let out = cli.out.clone().or_else(|| cfg.outputs.report.clone());
    let csv = cfg.outputs.csv.clone();
    let loaded = cfg.load()?;
    let ov = Overrides {
        seed: cli.seed,
        samples: cli.samples,
        resolution: cli.resolution,
        adversarial: cli.adversarial,
    };
    let outcome = match &cli.command {
        Command::Constants => commands::constants(&loaded)?,
        Command::Verify { suites } => commands::verify(&loaded, suites, &ov)?,
        Command::Experiment { which } => commands::experiment(&loaded, *which, &ov, csv.as_deref())?,
    };
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    // clap's own usage exit code is 2, which is reserved for hypothesis violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
