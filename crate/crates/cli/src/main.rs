mod commands;
mod config;
mod output;
mod selftest;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

/// Simulation, certificate and verification runner for the damped beam-string system.
#[derive(Debug, Parser)]
#[command(name = "kvbeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named scenario; replaces the one in the config.
    #[arg(long, global = true, value_name = "NAME")]
    scenario: Option<String>,
    /// Beam and string mode counts.
    #[arg(long, global = true, value_name = "NW,NP", value_parser = config::parse_modes)]
    modes: Option<(usize, usize)>,
    /// Time step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time in seconds.
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the property suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat sign-convention violations as errors.
    #[arg(long = "strict-signs", global = true)]
    strict_signs: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory.csv and run.json.
    Simulate,
    /// Check the structural conditions, select free parameters and write certificate.json.
    Certify,
    /// Simulate, certify and compare the trajectory with the selected bounds.
    Verify,
    /// Certify (and optionally simulate) every point of a parameter grid.
    Sweep,
    /// Run the built-in property suite and print a summary table.
    Selftest,
}

/// A terminating outcome with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    /// Input errors reported by the library are usage errors; everything else is numerical.
    pub fn numerical(e: kvbeam::Error) -> Self {
        let code = if matches!(e, kvbeam::Error::InvalidInput(_)) { 2 } else { 3 };
        Self {
            code,
            message: e.to_string(),
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Self::usage(format!("{what}: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let overrides = Overrides {
        scenario: cli.scenario,
        modes: cli.modes,
        dt: cli.dt,
        t_end: cli.t_end,
        out: cli.out,
        seed: cli.seed,
        strict_signs: cli.strict_signs,
    };
    let result = config::load(cli.config.as_deref(), &overrides).and_then(|cfg| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Certify => commands::certify(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Sweep => sweep::run(&cfg),
        Command::Selftest => selftest::run(&cfg),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
