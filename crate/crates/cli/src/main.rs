use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zk_virial::virial::PotentialVariant;

mod commands;
mod config;
mod output;

use config::{ExperimentConfig, Overrides};

/// Ground state, virial spectrum, positivity certificate and soliton
/// evolution for the 3D Zakharov–Kuznetsov equation.
#[derive(Parser)]
#[command(name = "zkvirial", version)]
struct Cli {
    /// TOML configuration; defaults are used for anything not given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the eigensolver start vector and noise perturbations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Potential variant: derived or paper-matrix.
    #[arg(long, global = true)]
    variant: Option<PotentialVariant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the radial profile and report its identities.
    Groundstate,
    /// Eigenvalues below the threshold with their angle tables.
    Spectrum {
        /// Run every size in `spectrum.sweep_sizes`.
        #[arg(long)]
        sweep: bool,
    },
    /// Sector bounds and the positivity verdict.
    Certify,
    /// Soliton evolution with conservation, modulation and monotonicity logs.
    Evolve,
    /// Print the resolved configuration.
    Config,
}

/// Error classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 2.
    Invariant(String),
    /// Exit code 3.
    Solver(String),
    /// Exit code 4.
    Config(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Invariant(_) => 2,
            Self::Solver(_) => 3,
            Self::Config(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Invariant(m) | Self::Solver(m) | Self::Config(m) => m,
        }
    }
}

impl From<zk_virial::Error> for Failure {
    fn from(e: zk_virial::Error) -> Self {
        use zk_virial::Error as E;
        let msg = e.to_string();
        match e {
            E::NotConverged { .. } | E::Collapse | E::Linalg(_) | E::CapExceeded { .. } => Self::Solver(msg),
            E::ShapeMismatch { .. } | E::GridMismatch(_) | E::AmbiguousParity { .. } | E::BlowUp { .. } => {
                Self::Invariant(msg)
            }
            E::InvalidArgument(_) | E::Extrapolation { .. } | E::TimeStep { .. } | E::Parse(_) | E::Io(_) => {
                Self::Config(msg)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides { out: cli.out, seed: cli.seed, variant: cli.variant });
    match cli.command {
        Command::Groundstate => commands::groundstate(&cfg),
        Command::Spectrum { sweep } => commands::spectrum(&cfg, sweep),
        Command::Certify => commands::certify(&cfg),
        Command::Evolve => commands::evolve(&cfg),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
