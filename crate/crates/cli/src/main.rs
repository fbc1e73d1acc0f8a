mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ConfigError;

/// Design and simulation of fiber Fabry-Pérot cavities with mode-matching fiber assemblies.
#[derive(Debug, Parser)]
#[command(name = "ffpc", version)]
pub struct Cli {
    /// Project configuration; defaults to `ffpc.conf` in $FFPC_CONFIG_DIR.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Noise seed, overriding `[scan] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    /// Two-column `L_um,eta00` curve (sweep only).
    Eta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find GRIN and spacer lengths for the `[target]` output waist.
    Design,
    /// Cavity eigenmode, finesse and clipping losses.
    Mode,
    /// Coupling of the `[input]` beam into the cavity modes.
    Match,
    /// Mode matching, finesse and β over a range of cavity lengths.
    Sweep,
    /// Synthesize a transmission spectrum.
    Spectrum,
    /// Detect and fit peaks in a recorded spectrum.
    Analyze {
        /// Spectrum CSV with `detuning_Hz,intensity` columns.
        input: PathBuf,
    },
    /// Fit a Gaussian beam to knife-edge data.
    FitBeam {
        /// Knife-edge CSV with `z_um,x_um,power_fraction` columns.
        input: PathBuf,
    },
    /// Solve for the GRIN gradient constant that reproduces the `[target]` waist.
    CalibrateGrin,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Core(ffpc_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ffpc_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::InvalidComparison(_) | E::Parse { .. } | E::Io(_) | E::Unimplemented(_) => 1,
                E::NoSolution { .. } | E::Unstable { .. } | E::Overdamped { .. } | E::NoData | E::CoreClipping { .. } => 2,
                _ => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<ffpc_core::Error> for CliError {
    fn from(e: ffpc_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Core(ffpc_core::Error::Io(e))) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ffpc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
