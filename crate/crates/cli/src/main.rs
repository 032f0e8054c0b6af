//! `shapereg` command-line front end.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapereg_core::experiment::Condition;

use crate::commands::CliError;

#[derive(Parser)]
#[command(
    name = "shapereg",
    version,
    about = "Correspondence-free registration of 2D contours"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a target contour onto a reference.
    Register(RegisterArgs),
    /// Group-wise registration of every contour file in a directory.
    Group(GroupArgs),
    /// Run a synthetic experiment condition.
    Experiment(ExperimentArgs),
    /// Score a target contour against a reference.
    Metrics(MetricsArgs),
    /// Generate synthetic contours.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args, Clone, Debug, Default)]
pub struct StopArgs {
    /// Maximum number of iterations.
    #[arg(long)]
    pub imax: Option<usize>,
    /// Movement tolerance.
    #[arg(long)]
    pub cmin: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Dtw,
    DtwUnweighted,
    Icp,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    pub reference: PathBuf,
    pub target: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Dtw)]
    pub method: MethodArg,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Sakoe-Chiba band half-width for DTW (ignored by icp).
    #[arg(long)]
    pub band: Option<usize>,
    /// Raster cell size for IoU, in pixels.
    #[arg(long, default_value_t = 0.25)]
    pub resolution: f64,
    /// Reorder both inputs from unordered point sets first.
    #[arg(long)]
    pub recover_order: bool,
    /// Also write overlay.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct GroupArgs {
    /// Directory of .csv / .json contour files.
    pub dir: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Sample file whose preshape seeds the mean (default: the longest).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Dtw)]
    pub method: MethodArg,
    #[command(flatten)]
    pub stop: StopArgs,
    #[arg(long)]
    pub band: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// outliers, unsorted, outliers+unsorted or groupwise.
    #[arg(value_parser = parse_condition)]
    pub name: Condition,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON experiment configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub stop: StopArgs,
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub resolution: Option<f64>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub target: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub resolution: f64,
    /// Also write metrics.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Femur-like template plus a family of deformed, posed, truncated copies.
    Family {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 600)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        deform_sigma: f64,
        /// Truncation fraction range as `min,max`.
        #[arg(long, default_value = "0,0.15", value_parser = parse_range)]
        truncation: (f64, f64),
    },
    /// Add outlier segments with the default outlier model.
    Outliers {
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomly permute the points of a contour.
    Shuffle {
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Condition::ALL.iter().map(|c| c.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected min,max")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((parse(a)?, parse(b)?))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SHAPEREG_THREADS") else {
        return Ok(());
    };
    let n = v
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "SHAPEREG_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let run = || -> Result<(), CliError> {
        configure_threads()?;
        match cli.command {
            Command::Register(a) => commands::register(&a, &argv),
            Command::Group(a) => commands::group(&a, &argv),
            Command::Experiment(a) => commands::experiment(&a, &argv),
            Command::Metrics(a) => commands::metrics(&a, &argv),
            Command::Synth(c) => commands::synth(&c, &argv),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shapereg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
