//! Command-line harness for the iqsync library: pattern export, channel
//! simulation, offset recovery, analytic model curves, Monte-Carlo sweeps,
//! and poly-log fitting, with CSV output suitable for plotting.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver no-solution.

mod commands;
mod util;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Desk-scale guard: simulation commands refuse patterns longer than this
/// many symbols unless --force is given.
pub const SYMBOL_BUDGET: u64 = 1 << 30;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    NoSolution(String),
    /// Downstream consumer closed the pipe; not an error for this process.
    BrokenPipe,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::NoSolution(m) => f.write_str(m),
            CliError::BrokenPipe => f.write_str("broken pipe"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NoSolution(_) => 3,
            CliError::BrokenPipe => 0,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            CliError::BrokenPipe
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<iqsync::pattern::PatternError> for CliError {
    fn from(e: iqsync::pattern::PatternError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iqsync::channel::ChannelError> for CliError {
    fn from(e: iqsync::channel::ChannelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iqsync::recovery::RecoveryError> for CliError {
    fn from(e: iqsync::recovery::RecoveryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iqsync::analytics::ModelError> for CliError {
    fn from(e: iqsync::analytics::ModelError) -> Self {
        match e {
            iqsync::analytics::ModelError::NoSolution { .. } => CliError::NoSolution(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "iqsync",
    about = "Interleaved clock-offset recovery for single-photon links",
    version,
    args_override_self = true
)]
struct Cli {
    /// Optional key=value file supplying defaults for the subcommand's long
    /// flags; explicit flags win on conflict.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synchronization pattern and write it to a file.
    Pattern(PatternArgs),
    /// Simulate the detection record of one synchronization attempt.
    Simulate(SimulateArgs),
    /// Recover the clock offset from a detection file.
    Recover(RecoverArgs),
    /// Analytic model tables (CSV).
    #[command(subcommand)]
    Model(ModelCommand),
    /// Monte-Carlo sweep over configuration and link grids (CSV).
    Sweep(SweepArgs),
    /// Fit a * (log2 n)^b to a points CSV.
    Fit(FitArgs),
}

#[derive(Args, Debug)]
struct PatternArgs {
    /// Maximum level.
    #[arg(long = "lmax")]
    lmax: u32,
    /// Degree of interleaving.
    #[arg(long = "di", default_value_t = 1)]
    di: u32,
    /// Level-selector seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Symbol duration in picoseconds.
    #[arg(long = "ts-ps", default_value_t = 1600)]
    ts_ps: u64,
    /// Output file.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Write '0'/'1' characters instead of packed bits.
    #[arg(long)]
    text: bool,
    /// Lift the desk-scale size guard.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long = "lmax")]
    lmax: u32,
    #[arg(long = "di", default_value_t = 1)]
    di: u32,
    /// Level-selector seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "ts-ps", default_value_t = 1600)]
    ts_ps: u64,
    /// Signal detection probability per symbol.
    #[arg(long = "psig", conflicts_with = "eta_db")]
    psig: Option<f64>,
    /// Channel attenuation in dB (mean photon number 1); alternative to --psig.
    #[arg(long = "eta-db")]
    eta_db: Option<f64>,
    /// Noise detection probability per symbol.
    #[arg(long = "pnoise", default_value_t = 0.0)]
    pnoise: f64,
    /// Injected clock offset in timebins (positive: receiver clock ahead).
    #[arg(long = "offset-tb", default_value_t = 0, allow_hyphen_values = true)]
    offset_tb: i64,
    /// Sub-timebin offset as a fraction of one timebin.
    #[arg(long = "frac-offset", default_value_t = 0.0)]
    frac_offset: f64,
    /// Gaussian timestamp jitter in timebins.
    #[arg(long = "jitter-sigma", default_value_t = 0.0)]
    jitter_sigma: f64,
    /// Histogram bins for sub-timebin alignment.
    #[arg(long = "nbins", default_value_t = 64)]
    nbins: usize,
    /// Detection-process seed.
    #[arg(long = "rng-seed", default_value_t = 1)]
    rng_seed: u64,
    /// Output detection file.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Write little-endian u64 binary instead of text.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    #[arg(long = "lmax")]
    lmax: u32,
    #[arg(long = "di", default_value_t = 1)]
    di: u32,
    /// Detection file (one decimal timebin per line, ascending).
    #[arg(long)]
    detections: std::path::PathBuf,
    /// Read little-endian u64 binary instead of text.
    #[arg(long)]
    binary: bool,
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    /// Success-probability model over a parameter grid.
    Success(ModelGridArgs),
    /// Expected inner-loop iterations over a parameter grid.
    Loops(ModelGridArgs),
    /// Tolerable attenuation at a target success probability.
    Attenuation(AttenuationArgs),
    /// QBER implied by the detection probabilities.
    Qber(QberArgs),
    /// Pattern durations versus maximum recoverable offset.
    Durations(DurationsArgs),
}

#[derive(Args, Debug)]
struct ModelGridArgs {
    /// Comma-separated maximum levels.
    #[arg(long = "lmax", value_delimiter = ',')]
    lmax: Vec<u32>,
    /// Comma-separated interleaving degrees; "max" selects n_levels.
    #[arg(long = "di", value_delimiter = ',', default_value = "1")]
    di: Vec<String>,
    /// Comma-separated signal probabilities.
    #[arg(long = "psig", value_delimiter = ',', conflicts_with = "eta_db")]
    psig: Vec<f64>,
    /// Comma-separated attenuations in dB; alternative to --psig.
    #[arg(long = "eta-db", value_delimiter = ',')]
    eta_db: Vec<f64>,
    /// Comma-separated noise probabilities.
    #[arg(long = "pnoise", value_delimiter = ',', default_value = "0")]
    pnoise: Vec<f64>,
    /// Output CSV file (stdout when omitted).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct AttenuationArgs {
    /// Inclusive maximum-level range "lo:hi" (or a single value).
    #[arg(long = "lmax-range")]
    lmax_range: String,
    /// Interleaving: a number or "max".
    #[arg(long = "di", default_value = "1")]
    di: String,
    /// Noise policy: "zero", "fixed=Q", or "ratio=R".
    #[arg(long = "pnoise-policy", default_value = "zero")]
    pnoise_policy: String,
    /// Target success probability.
    #[arg(long = "ptarget", default_value_t = 0.5)]
    ptarget: f64,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct QberArgs {
    #[arg(long = "psig", value_delimiter = ',')]
    psig: Vec<f64>,
    #[arg(long = "pnoise", value_delimiter = ',')]
    pnoise: Vec<f64>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct DurationsArgs {
    /// Inclusive maximum-level range "lo:hi" (or a single value).
    #[arg(long = "lmax-range", default_value = "1:30")]
    lmax_range: String,
    #[arg(long = "ts-ps", default_value_t = 1600)]
    ts_ps: u64,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long = "lmax", value_delimiter = ',')]
    lmax: Vec<u32>,
    #[arg(long = "di", value_delimiter = ',', default_value = "1")]
    di: Vec<String>,
    #[arg(long = "psig", value_delimiter = ',', conflicts_with = "eta_db")]
    psig: Vec<f64>,
    #[arg(long = "eta-db", value_delimiter = ',')]
    eta_db: Vec<f64>,
    /// Comma-separated noise probabilities (crossed with the signal grid).
    #[arg(long = "pnoise", value_delimiter = ',', conflicts_with = "pnoise_ratio")]
    pnoise: Vec<f64>,
    /// Noise as a fixed ratio of p_sig (e.g. 0.22 for an 11% QBER).
    #[arg(long = "pnoise-ratio")]
    pnoise_ratio: Option<f64>,
    /// Trials per grid cell.
    #[arg(long, default_value_t = 50)]
    trials: u32,
    /// Base seed; trial seeds are base_seed + trial index.
    #[arg(long = "base-seed", default_value_t = 1)]
    base_seed: u64,
    /// Aggregate output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Optional per-trial record CSV.
    #[arg(long = "per-trial")]
    per_trial: Option<std::path::PathBuf>,
    /// Lift the desk-scale size guard (oversize cells are skipped otherwise).
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Points CSV with a header row.
    #[arg(long)]
    points: std::path::PathBuf,
    /// Abscissa column name.
    #[arg(long = "x-col", default_value = "delta_max")]
    x_col: String,
    /// Ordinate column name.
    #[arg(long = "y-col", default_value = "n_loop")]
    y_col: String,
}

fn main() -> ExitCode {
    let argv = match util::apply_config_file(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Pattern(args) => commands::pattern(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Recover(args) => commands::recover(args),
        Command::Model(model) => match model {
            ModelCommand::Success(args) => commands::model_success(args),
            ModelCommand::Loops(args) => commands::model_loops(args),
            ModelCommand::Attenuation(args) => commands::model_attenuation(args),
            ModelCommand::Qber(args) => commands::model_qber(args),
            ModelCommand::Durations(args) => commands::model_durations(args),
        },
        Command::Sweep(args) => commands::sweep(args),
        Command::Fit(args) => commands::fit(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
