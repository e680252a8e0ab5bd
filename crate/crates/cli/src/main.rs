mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Simulator and verification runner for extremum seeking with spherical dithers.
#[derive(Debug, Parser)]
#[command(name = "divseek", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one scenario and write its trajectory as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory path; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the piecewise-uniform disturbance seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate an objective or its ball average on a grid.
    Field {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "DIVSEEK_DEFAULT_JOBS")]
        jobs: Option<usize>,
    },
    /// Run verification checks, one JSON report per line.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "DIVSEEK_DEFAULT_JOBS")]
        jobs: Option<usize>,
    },
    /// Run one scenario per value of a parameter and tabulate the outcomes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "DIVSEEK_DEFAULT_JOBS")]
        jobs: Option<usize>,
        /// Disturbance seed shared by every run.
        #[arg(long)]
        seed: Option<u64>,
        /// Also record the sup distance to the averaged flow.
        #[arg(long)]
        compare_averaged: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Omega,
    K,
    A,
    Delta,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Omega => "omega",
            Self::K => "k",
            Self::A => "a",
            Self::Delta => "delta",
        })
    }
}

/// Failures that originate in the command layer.
#[derive(Debug)]
pub enum CliFailure {
    Usage(String),
    VerifyFailed { failed: usize, total: usize },
}

impl fmt::Display for CliFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => f.write_str(msg),
            Self::VerifyFailed { failed, total } => write!(f, "{failed} of {total} checks failed"),
        }
    }
}

impl std::error::Error for CliFailure {}

/// Error category and exit code.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<CliFailure>() {
            return match f {
                CliFailure::Usage(_) => ("usage", 2),
                CliFailure::VerifyFailed { .. } => ("verify", 1),
            };
        }
        if let Some(e) = cause.downcast_ref::<divseek::Error>() {
            return match e {
                divseek::Error::Divergence { .. }
                | divseek::Error::NonFinite { .. }
                | divseek::Error::AveragedFlowEscape { .. } => ("divergence", 3),
                divseek::Error::Format(_) => ("format", 2),
                _ => ("validation", 2),
            };
        }
        if cause.is::<serde_json::Error>() {
            return ("config", 2);
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return ("io", 4);
        }
    }
    ("internal", 5)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "divseek-error[usage]: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, out, seed),
        Command::Field { config, out, jobs } => commands::field(&config, &out, jobs),
        Command::Verify {
            suite,
            out,
            seed,
            jobs,
        } => commands::verify(&suite, out, seed, jobs),
        Command::Sweep {
            config,
            axis,
            values,
            out,
            jobs,
            seed,
            compare_averaged,
        } => commands::sweep(&config, axis, &values, &out, jobs, seed, compare_averaged),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            eprintln!("divseek-error[{kind}]: {}", one_line(&format!("{err:#}")));
            ExitCode::from(code)
        }
    }
}
