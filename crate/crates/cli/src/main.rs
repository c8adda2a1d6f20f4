use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Residual kriging of gridded predictions with point observations.
#[derive(Debug, Parser)]
#[command(name = "rkgeo", version)]
struct Cli {
    /// Worker threads; defaults to RKGEO_THREADS, then the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// TOML file whose keys are long flag names. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical semivariogram of a point CSV, written as a bin CSV.
    Semivariogram(SemivariogramArgs),
    /// Fit a variogram model to a bin CSV.
    Fit(FitArgs),
    /// Ordinary kriging of point values onto a grid.
    Krige(KrigeArgs),
    /// Correct a prediction grid with kriged point residuals.
    Rk(RkArgs),
    /// Generate a synthetic truth grid, prediction grid and footprints.
    Simulate(SimulateArgs),
    /// Compare a predicted grid with a reference grid.
    Validate(ValidateArgs),
    /// Periodicity score of a bin CSV at a given period.
    Periodicity(PeriodicityArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SemivariogramArgs {
    /// Input point CSV.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Output bin CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Lag bin width in meters [default: 100].
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Largest lag in meters [default: 10000].
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Direction in degrees clockwise from north; omit for omnidirectional.
    #[arg(long)]
    pub azimuth: Option<f64>,
    /// Angular tolerance in degrees [default: 1].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Beam class to keep: power, coverage or all [default: all].
    #[arg(long)]
    pub beam: Option<String>,
    /// Track azimuth class to keep: nwd or swd.
    #[arg(long)]
    pub azimuth_class: Option<String>,
    /// Use a uniform random subset of this many samples.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Seed for --subsample [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    /// Input bin CSV.
    #[arg(long)]
    pub bins: Option<PathBuf>,
    /// Output fit block (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// exponential, spherical, gaussian, linear or circular [default: exponential].
    #[arg(long)]
    pub kind: Option<String>,
    /// pair-count or uniform [default: pair-count].
    #[arg(long)]
    pub weighting: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct KrigingArgs {
    /// auto, global or nearest [default: auto].
    #[arg(long)]
    pub neighborhood: Option<String>,
    /// Neighbors for --neighborhood nearest [default: 64].
    #[arg(long)]
    pub k: Option<usize>,
    /// Search radius for --neighborhood nearest [default: model range].
    #[arg(long)]
    pub max_radius: Option<f64>,
    /// Coincident samples: average or error [default: average].
    #[arg(long)]
    pub duplicates: Option<String>,
    /// Initial diagonal regularization, relative to the sill [default: 0].
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct KrigeArgs {
    /// Input point CSV.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Model file, or inline `kind:nugget,sill,range`.
    #[arg(long)]
    pub model: Option<String>,
    /// ASCII grid whose geometry is used for the output.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Output extent `xmin,ymin,xmax,ymax` when no --grid is given.
    #[arg(long)]
    pub extent: Option<String>,
    /// Cell size for --extent.
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Output estimate grid.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Output kriging variance grid.
    #[arg(long)]
    pub variance: Option<PathBuf>,
    #[command(flatten)]
    pub kriging: KrigingArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RkArgs {
    /// Observed point CSV.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Prediction ASCII grid.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    /// Site extent `xmin,ymin,xmax,ymax`; repeat for several sites
    /// [default: the prediction extent].
    #[arg(long)]
    pub site: Vec<String>,
    /// Buffer around each site in meters [default: 3000].
    #[arg(long)]
    pub buffer: Option<f64>,
    /// Model file or inline `kind:nugget,sill,range`; fitted from
    /// along-track semivariograms when omitted.
    #[arg(long)]
    pub model: Option<String>,
    /// Model kind when fitting [default: exponential].
    #[arg(long)]
    pub kind: Option<String>,
    /// Fit weighting [default: pair-count].
    #[arg(long)]
    pub weighting: Option<String>,
    /// Lag bin width when fitting [default: 100].
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Largest lag when fitting [default: 10000].
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Directional tolerance when fitting [default: 1].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// NWD along-track azimuth [default: 36].
    #[arg(long)]
    pub azimuth_nwd: Option<f64>,
    /// SWD along-track azimuth [default: 144].
    #[arg(long)]
    pub azimuth_swd: Option<f64>,
    /// Beam class used: power, coverage or all [default: power].
    #[arg(long)]
    pub beam: Option<String>,
    /// Output corrected grid; with several sites `.siteN` is inserted
    /// before the extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output kriged residual grid.
    #[arg(long)]
    pub kriged: Option<PathBuf>,
    /// Output kriging variance grid.
    #[arg(long)]
    pub variance: Option<PathBuf>,
    /// Output fit block of the model used.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
    /// Print the per-site diagnostics report to stderr.
    #[arg(long)]
    pub report: bool,
    #[command(flatten)]
    pub kriging: KrigingArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid extent `xmin,ymin,xmax,ymax` [default: 0,0,6000,6000].
    #[arg(long)]
    pub extent: Option<String>,
    /// Cell size in meters [default: 100].
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Truth field model [default: exponential:2,20,2500].
    #[arg(long)]
    pub truth_model: Option<String>,
    /// Truth field mean [default: 30].
    #[arg(long)]
    pub truth_mean: Option<f64>,
    /// Prediction error field model; the prediction equals the truth plus
    /// --prediction-bias when omitted.
    #[arg(long)]
    pub error_model: Option<String>,
    /// Constant added to the prediction [default: 0].
    #[arg(long)]
    pub prediction_bias: Option<f64>,
    /// Passes as `class:offset` list, e.g. `nwd:0,swd:300` [default: nwd:0].
    #[arg(long)]
    pub passes: Option<String>,
    /// Coverage-beam bias [default: -3].
    #[arg(long)]
    pub coverage_bias: Option<f64>,
    /// Coverage-beam noise sd [default: 0].
    #[arg(long)]
    pub coverage_noise_sd: Option<f64>,
    /// Noise sd on every observation [default: 0].
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Cross-track position jitter sd per track [default: 0].
    #[arg(long)]
    pub track_offset_sd: Option<f64>,
    /// Value offset sd per track [default: 0].
    #[arg(long)]
    pub track_value_offset_sd: Option<f64>,
    /// Cross-track beam spacing [default: 600].
    #[arg(long)]
    pub track_spacing: Option<f64>,
    /// Along-track footprint spacing [default: 60].
    #[arg(long)]
    pub footprint_spacing: Option<f64>,
    /// Beams per pass [default: 8].
    #[arg(long)]
    pub beams: Option<usize>,
    /// NWD track azimuth [default: 36].
    #[arg(long)]
    pub azimuth_nwd: Option<f64>,
    /// SWD track azimuth [default: 144].
    #[arg(long)]
    pub azimuth_swd: Option<f64>,
    /// Output point CSV.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Output truth grid.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output prediction grid.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ValidateArgs {
    /// Predicted grid.
    #[arg(long)]
    pub predicted: Option<PathBuf>,
    /// Reference grid; cropped to the predicted extent if larger.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Point CSV for distance stratification.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Beam class of --points to use: power, coverage or all [default: all].
    #[arg(long)]
    pub beam: Option<String>,
    /// Radii for stratification [default: 0,250,500,1000,inf].
    #[arg(long)]
    pub radii: Option<String>,
    /// Output metrics CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PeriodicityArgs {
    /// Input bin CSV.
    #[arg(long)]
    pub bins: Option<PathBuf>,
    /// Period in meters [default: 600].
    #[arg(long)]
    pub period: Option<f64>,
    /// Output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn init_threads(flag: Option<usize>, cfg: &RunConfig) -> Result<(), commands::CliError> {
    let from_env = match std::env::var("RKGEO_THREADS") {
        Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
            commands::CliError::Usage(format!(
                "RKGEO_THREADS must be a positive integer, got '{v}'"
            ))
        })?),
        _ => None,
    };
    let threads = flag.or(cfg.threads).or(from_env);
    if let Some(n) = threads {
        if n == 0 {
            return Err(commands::CliError::Usage("--threads must be > 0".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::CliError::Usage(format!("cannot set up {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(commands::CliError::Usage)?,
        None => RunConfig::default(),
    };
    init_threads(cli.threads, &cfg)?;
    match cli.command {
        Command::Semivariogram(a) => commands::semivariogram(a, &cfg),
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Krige(a) => commands::krige(a, &cfg),
        Command::Rk(a) => commands::rk(a, &cfg),
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::Validate(a) => commands::validate(a, &cfg),
        Command::Periodicity(a) => commands::periodicity(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
