use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwlate_core::Kernel;

#[derive(Debug, Parser)]
#[command(name = "cwlate", version, about = "Weighted LATE estimation for fuzzy RD designs with a discrete covariate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point estimates and robust bias-corrected intervals.
    Estimate(EstimateArgs),
    /// Plug-in bandwidth selection.
    Bandwidth(BandwidthArgs),
    /// Monte Carlo campaign from a JSON configuration.
    Simulate(SimulateArgs),
    /// Reach and effects of a targeted incentive policy.
    Policy(PolicyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub y: String,
    #[arg(long, default_value = "x")]
    pub x: String,
    #[arg(long, default_value = "z")]
    pub z: String,
    /// Covariate columns; several columns are interacted into one cell.
    #[arg(long, value_delimiter = ',')]
    pub cells: Vec<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub cutoff: f64,
    #[arg(long, default_value_t = Kernel::Triangular)]
    pub kernel: Kernel,
    /// Minimum observations per cell on each side of the cutoff.
    #[arg(long, default_value_t = 5)]
    pub min_side_count: usize,
    /// Estimand, e.g. `cwlate`, `unconditional_wald`, `average`, `welfare`,
    /// `counterfactual=0.2,0.8` or `custom=1,2`. Repeatable.
    #[arg(long = "estimand", default_value = "cwlate")]
    pub estimands: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Main bandwidths, one estimate per value.
    #[arg(long, value_delimiter = ',', conflicts_with = "auto_bandwidth")]
    pub h: Vec<f64>,
    /// Bias bandwidths; a single value applies to every `h`, default `b = h`.
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<f64>,
    /// Select `h` and `b` for each estimand.
    #[arg(long)]
    pub auto_bandwidth: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Estimate on `|z| <= h` only, so cell shares come from the window.
    #[arg(long)]
    pub within_bandwidth_pi: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON Monte Carlo configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write replication 0 as CSV (`y,x,z,cell`).
    #[arg(long)]
    pub dump_data: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Population cell probabilities.
    #[arg(long, value_delimiter = ',', required = true)]
    pub f: Vec<f64>,
    /// Per-cell compliance.
    #[arg(long = "delta-x", value_delimiter = ',', required = true)]
    pub delta_x: Vec<f64>,
    /// Per-cell complier effects.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub beta: Vec<f64>,
    /// Targeting distribution.
    #[arg(long, value_delimiter = ',', required_unless_present = "b", conflicts_with = "b")]
    pub p: Vec<f64>,
    /// Instrument whose implied policy is evaluated.
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
