use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dbnmf", version, about = "Deep beta-NMF and min-vol deep KL-NMF")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a nonnegative matrix and write factors, trace and manifest.
    Factorize(FactorizeArgs),
    /// Compare a deep run against a baseline run (CSV on stdout).
    Compare(CompareArgs),
    /// Render the features of one layer as a PGM mosaic.
    Render(RenderArgs),
    /// Hoyer sparsity and SSC zero-count report for an `H` matrix.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Multilayer,
    Deep,
    Minvol,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Multilayer => "multilayer",
            Method::Deep => "deep",
            Method::Minvol => "minvol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Auto,
    Csv,
    Binary,
}

#[derive(Debug, Args)]
pub struct FactorizeArgs {
    /// Data matrix (CSV or binary).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    /// Transpose the input after reading.
    #[arg(long)]
    pub transpose: bool,
    #[arg(long, value_enum)]
    pub method: Method,
    /// One of 0, 0.5, 1, 1.5, 2.
    #[arg(long)]
    pub beta: String,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<usize>,
    /// `auto` or a comma-separated list, one weight per layer.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Min-vol weights, one per layer (default 0).
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 100.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 50)]
    pub admm_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub admm_tol: f64,
    /// Sweeps of the chosen method (per layer for multilayer).
    #[arg(long, default_value_t = 500)]
    pub sweeps: usize,
    /// Multilayer sweeps per layer used to start deep and minvol runs.
    #[arg(long, default_value_t = 500)]
    pub warm_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub eps_floor: Option<f64>,
    /// Stop once the relative objective change falls below `--rel-obj-tol`.
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub rel_obj_tol: f64,
    /// Record wall-clock seconds in the trace (makes it nondeterministic).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub deep: PathBuf,
    #[arg(long)]
    pub baseline: PathBuf,
    /// Divergence used for the errors; read from the deep run's manifest
    /// when omitted.
    #[arg(long)]
    pub beta: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub factors: PathBuf,
    /// One-based layer whose features `H_k ... H_1` are drawn.
    #[arg(long)]
    pub layer: usize,
    /// Tile size as HxW; required unless `--sidecar` is given.
    #[arg(long)]
    pub tile: Option<String>,
    /// `width,height` file giving the tile size.
    #[arg(long, conflicts_with = "tile")]
    pub sidecar: Option<PathBuf>,
    /// Tiles per mosaic row.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub h_file: PathBuf,
    /// Zero threshold for the SSC check (default 1e-9 times the largest entry).
    #[arg(long)]
    pub zero_tol: Option<f64>,
}
