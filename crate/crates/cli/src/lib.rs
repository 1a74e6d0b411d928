//! `cvqss` command-line front end: key-rate sweeps, threshold-scheme breakdowns,
//! protocol simulation and state validation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 unphysical state.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod format;

use config::ConfigFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Unphysical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Unphysical(_) => 3,
        }
    }
}

impl From<cvqss::Error> for CliError {
    fn from(e: cvqss::Error) -> Self {
        match e {
            cvqss::Error::Unphysical { .. } => CliError::Unphysical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Parser)]
#[command(name = "cvqss", version, about = "Key-rate bounds and protocol simulation for CV quantum secret sharing")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the main output (sweep CSV, simulation summary CSV, …) to this path.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Suppress informational messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Flat key=value file with defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate over a grid of squeezing values and transmissivities, as CSV.
    Sweep(SweepArgs),
    /// Per-structure breakdown of a (k,n)-threshold key rate.
    Threshold(ThresholdArgs),
    /// Monte Carlo run of the measurement protocol.
    Simulate(SimulateArgs),
    /// Physicality diagnostics for a resource state or a covariance file.
    Validate(ValidateArgs),
}

/// Resource-state options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct ResourceArgs {
    /// Number of players.
    #[arg(long)]
    pub n: Option<usize>,
    /// `chain`, `star`, or an edge list over nodes 0 (dealer) … n, e.g. `0-1,1-2`.
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long)]
    pub cz_weight: Option<f64>,
    /// Added noise per player channel, vacuum units.
    #[arg(long)]
    pub excess_noise: Option<f64>,
    /// Quadrature squeezed in the input modes (`x` or `p`).
    #[arg(long)]
    pub squeezed: Option<String>,
    /// Player measurement frame: `fourier` or `physical`.
    #[arg(long)]
    pub frame: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    /// Squeezing parameter r.
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    /// Channel transmissivity.
    #[arg(long = "T", allow_hyphen_values = true)]
    pub transmissivity: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub r_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub r_steps: Option<usize>,
    /// Comma-separated list, e.g. `1,0.95,0.9,0.85`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub transmissivities: Option<Vec<f64>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub resource: ResourceArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub resource: ResourceArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub reveal_fraction: Option<f64>,
    /// Probability that each party measures x in a round.
    #[arg(long)]
    pub basis_probability: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub resource: ResourceArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ValidateArgs {
    /// Whitespace- or comma-separated covariance matrix, one row per line.
    #[arg(long)]
    pub cov_file: Option<PathBuf>,
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub resource: ResourceArgs,
}

/// Global settings after merging flags and the config file.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub quiet: bool,
    pub config: ConfigFile,
}

impl Globals {
    fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let seed = config.resolve(cli.seed, "seed", 0)?;
        let output = cli.output.clone().or_else(|| config.raw("output").map(PathBuf::from));
        let format = match cli.format {
            Some(f) => Some(f),
            None => config
                .raw("format")
                .map(|raw| raw.parse::<Format>().map_err(|e| CliError::Config(format!("config key `format`: {e}"))))
                .transpose()?,
        };
        let quiet = cli.quiet || config.resolve(None, "quiet", false)?;
        Ok(Globals { seed, output, format, quiet, config })
    }

    /// Destination for the main output: `--output` if given, else `stdout`.
    pub fn open_output<'a>(&self, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
        match &self.output {
            Some(path) => {
                let file =
                    File::create(path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
                Ok(Box::new(BufWriter::new(file)))
            }
            None => Ok(Box::new(stdout)),
        }
    }
}

pub(crate) fn io_error(e: io::Error) -> CliError {
    CliError::Io(format!("write failed: {e}"))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let globals = Globals::resolve(cli)?;
    match &cli.command {
        Command::Sweep(args) => commands::sweep(&globals, args, stdout, stderr),
        Command::Threshold(args) => commands::threshold(&globals, args, stdout),
        Command::Simulate(args) => commands::simulate(&globals, args, stdout, stderr),
        Command::Validate(args) => commands::validate(&globals, args, stdout),
    }
}
