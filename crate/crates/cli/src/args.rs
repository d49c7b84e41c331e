use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(name = "supkde", version, about = "Sup-norm adaptive multivariate kernel density estimation")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "SUPKDE_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Select the bandwidth and independence structure for a dataset.
    Select(SelectArgs),
    /// Evaluate one estimator on a grid.
    Fit(FitArgs),
    /// Report the explicit constants for a block size.
    Constants(ConstantsArgs),
    /// Check a kernel against the kernel assumptions.
    KernelCheck(KernelCheckArgs),
    /// Monte Carlo sup-norm risk on a synthetic density.
    Simulate(SimulateArgs),
    /// Risk over several sample sizes and the fitted rate.
    Rates(RatesArgs),
    /// Frequency of each selected structure over replicates.
    Structure(StructureArgs),
    /// Re-run the command recorded in an earlier JSON output.
    Rerun(RerunArgs),
}

impl Command {
    pub fn label(&self) -> &'static str {
        match self {
            Command::Select(_) => "select",
            Command::Fit(_) => "fit",
            Command::Constants(_) => "constants",
            Command::KernelCheck(_) => "kernel-check",
            Command::Simulate(_) => "simulate",
            Command::Rates(_) => "rates",
            Command::Structure(_) => "structure",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelArgs {
    /// `default` (quadratic, moment order 1), `poly:<order>`, `box`, or a kernel JSON file.
    #[arg(long, default_value = "default")]
    pub kernel: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Theoretical,
    Calibrated,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Calibrated)]
    pub mode: ModeArg,
    /// Penalty multiplier (calibrated mode only; default 0.5).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Replacement for a* in calibrated mode.
    #[arg(long, default_value_t = 1.0)]
    pub a_star_floor: f64,
    /// Risk exponent.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionArgs {
    /// `auto`, `all`, `full`, `capped:<max block size>`, or a JSON file of partitions.
    #[arg(long, default_value = "auto")]
    pub family: String,
    /// Grid spacing; defaults to a quarter of the smallest candidate bandwidth.
    #[arg(long)]
    pub grid_res: Option<f64>,
    /// Largest dyadic level per axis.
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Compare each candidate with at most this many others (departs from the full rule).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Nodes per tabulated convolution profile.
    #[arg(long, default_value_t = supkde::kernels::DEFAULT_PROFILE_NODES)]
    pub profile_nodes: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputArgs {
    /// JSON result; printed to stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Tabular companion output.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectArgs {
    /// CSV, or binary with a `.bin` extension.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Bandwidths, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "selection")]
    pub h: Option<Vec<f64>>,
    /// Partition as 1-based JSON, e.g. `[[1,2],[3]]`; defaults to a single block.
    #[arg(long, conflicts_with = "selection")]
    pub partition: Option<String>,
    /// Take the bandwidth and partition from a `select` output.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long)]
    pub grid_res: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsArgs {
    /// Block size.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Also write the kernel as JSON.
    #[arg(long)]
    #[serde(skip)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationArgs {
    /// `gaussian:<σ₁>,…`, `correlated:<σ₁>,<σ₂>,<ρ>`, `bumps:<σ>,<dim>,<amplitude>,<scale>,<count>`,
    /// or a density JSON file.
    #[arg(long)]
    pub density: String,
    #[arg(long, default_value_t = 32)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesArgs {
    #[command(flatten)]
    pub sim: SimulationArgs,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Smoothness per axis (one value is broadcast).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub beta: Vec<f64>,
    /// Integrability per axis, `inf` allowed (one value is broadcast).
    #[arg(long, value_delimiter = ',', default_value = "inf")]
    pub p: Vec<String>,
    /// Structure for the smoothness index; defaults to the density's own factorization.
    #[arg(long)]
    pub structure: Option<String>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureArgs {
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerunArgs {
    /// A JSON output of an earlier run.
    #[arg(long)]
    pub from: PathBuf,
    /// Replaces the recorded JSON output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the recorded CSV output path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
