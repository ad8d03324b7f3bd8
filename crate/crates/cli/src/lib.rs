//! Command-line front end: argument parsing, the run configuration, and one
//! function per subcommand.

pub mod commands;
pub mod config;
pub mod files;

use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use eql_core::EqlError;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(EqlError),
}

impl From<EqlError> for CliError {
    fn from(e: EqlError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_DATA,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({
            "error": { "kind": kind, "message": message, "exit_code": self.exit_code() }
        })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "eql", version, about = "Train equation learner networks and extract their formulas")]
pub struct Cli {
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, scale, window and split a CSV into a dataset cache.
    Prep(PrepArgs),
    /// Two-phase training from a config file.
    Train(TrainArgs),
    /// Closed-form expression from a checkpoint.
    Extract(ExtractArgs),
    /// Descaled predictions of a saved expression.
    Predict(PredictArgs),
    /// Re-threshold a phase-1 checkpoint at several sparsity levels.
    Sweep(SweepArgs),
    /// Train every (λ, a) pair and rank the results.
    Grid(GridArgs),
    /// Time expression inference.
    Bench(BenchArgs),
    /// Compare a thresholded checkpoint with its fine-tuned successor.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_city: String,
    #[arg(long, default_value = "wind_speed")]
    pub target_feature: String,
    #[arg(long, default_value_t = eql_core::data::DEFAULT_LAGS)]
    pub lags: usize,
    #[arg(long, default_value_t = eql_core::data::DEFAULT_HORIZON)]
    pub horizon: usize,
    #[arg(long, default_value_t = eql_core::data::DEFAULT_TRAIN_FRAC)]
    pub train_frac: f64,
    /// Fit min/max on the training hours only.
    #[arg(long)]
    pub train_only_scaling: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Overrides shared by the commands that read a run config.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// esbjerg, odense or roskilde; sets λ, a and the threshold.
    #[arg(long)]
    pub preset: Option<String>,
    /// CSV to use instead of `data.path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target_city: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_p1: Option<usize>,
    #[arg(long)]
    pub epochs_p2: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = eql_core::extract::DEFAULT_PRUNE_TOL)]
    pub prune_tol: f64,
    /// Print rounded constants instead of the exact form.
    #[arg(long)]
    pub pretty: bool,
    #[arg(long, default_value_t = 4)]
    pub decimals: usize,
    #[arg(long, default_value_t = 1000)]
    pub verify_samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub verify_tol: f64,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub expr: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated target sparsities in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Replaces the timestamp in output file names.
    #[arg(long)]
    pub stamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long = "lambda", value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long = "a", value_delimiter = ',', required = true)]
    pub a_values: Vec<f64>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub stamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub expr: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Also write the result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to the samples after this chronological split point.
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub stamp: Option<String>,
}

/// Progress lines on stderr.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn line(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("eql: {}", msg.as_ref());
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Prep(a) => commands::prep(&a, log),
        Command::Train(a) => commands::train(&a, log),
        Command::Extract(a) => commands::extract(&a, log),
        Command::Predict(a) => commands::predict(&a, log),
        Command::Sweep(a) => commands::sweep(&a, log),
        Command::Grid(a) => commands::grid(&a, log),
        Command::Bench(a) => commands::bench(&a, log),
        Command::Report(a) => commands::report(&a, log),
    }
}

/// Parse, run and map the outcome to an exit code. Failures print a JSON
/// error object as the last line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
