use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "trinity", version, about = "Computation/bandwidth/memory trade-off toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Memory deficit of a data-parallel job and the traffic that covers it
    Deficit(DeficitArgs),
    /// Expected per-request compute with a latent cache
    ExpectedCompute(EconomicsArgs),
    /// Compute saved per additional GB of cache
    Marginal(EconomicsArgs),
    /// Minimum bandwidth reaching a quality target within a compute budget
    Frontier(FrontierArgs),
    /// Generate a clustered synthetic trace
    Gen(GenArgs),
    /// Replay a trace through the approximate cache
    Replay(ReplayArgs),
    /// Replay a trace at several capacities
    Sweep(SweepArgs),
    /// Fit a hit-rate family to a sweep curve
    Fit(FitArgs),
    /// Re-execute a run manifest after checking its input digests
    Rerun(RerunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DeficitArgs {
    /// Total training memory (GB)
    #[arg(long)]
    pub total: f64,
    /// Number of devices
    #[arg(long)]
    pub devices: u32,
    /// Memory per device (GB)
    #[arg(long)]
    pub per_device: f64,
    /// Extra bandwidth per GB of missing memory
    #[arg(long, default_value_t = 0.0)]
    pub k: f64,
    /// Synchronization multiplier applied to the state volume
    #[arg(long, default_value_t = 0.0)]
    pub allreduce: f64,
    /// Parameters + gradients + optimizer states (GB)
    #[arg(long, default_value_t = 0.0)]
    pub state: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EconomicsArgs {
    /// Denoising steps per generation
    #[arg(long, default_value_t = 50)]
    pub steps: u32,
    /// FLOPs per denoising step
    #[arg(long, default_value_t = 1e9)]
    pub step_cost: f64,
    /// Steps reused on a hit
    #[arg(long)]
    pub reuse: u32,
    /// Size of one cache entry (bare number = GB; suffixes B/KB/MB/GB/TB)
    #[arg(long, default_value = "2GB")]
    pub entry_size: String,
    /// Cache capacity
    #[arg(long, default_value = "10GB")]
    pub capacity: String,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Exactly one hit-rate model: `--hit`, `--beta`, `--kappa` with `--gamma`, or `--points`.
#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Constant hit rate
    #[arg(long)]
    pub hit: Option<f64>,
    /// Exponential-saturation rate (uses --entry-size)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Power-law scale (per GB)
    #[arg(long, requires = "gamma")]
    pub kappa: Option<f64>,
    /// Power-law exponent
    #[arg(long, requires = "kappa")]
    pub gamma: Option<f64>,
    /// Empirical curve as `GB:RATE,GB:RATE,...`
    #[arg(long)]
    pub points: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct FrontierArgs {
    /// CSV with header bandwidth_bpp,compute_flops,quality
    #[arg(long)]
    pub samples: PathBuf,
    /// Quality target
    #[arg(long)]
    pub quality: f64,
    /// Decoder compute budget (FLOPs)
    #[arg(long)]
    pub budget: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    pub requests: usize,
    #[arg(long, default_value_t = 100)]
    pub clusters: usize,
    /// Zipf exponent of cluster popularity
    #[arg(long, default_value_t = 1.1)]
    pub zipf: f64,
    /// Expected norm of the per-request noise vector
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    /// Resolution mix, e.g. `720p=0.6,1080p=0.3,2k=0.1`
    #[arg(long, default_value = "720p=1")]
    pub mix: String,
    /// RNG seed; the TRINITY_SEED environment variable takes precedence
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace file to write (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimArgs {
    /// Denoising steps per generation
    #[arg(long, default_value_t = 50)]
    pub steps: u32,
    /// FLOPs per step: one value, or `720p=1e9,1080p=2e9,2k=4e9`
    #[arg(long, default_value = "1e9")]
    pub step_cost: String,
    /// Stored latent depths
    #[arg(long, default_value = "5,10,15,20,25")]
    pub depths: String,
    /// Reuse-depth bands as `SIM:DEPTH,...` (similarity strictly above SIM)
    #[arg(long, default_value = "0.95:25,0.9:20,0.85:15,0.75:10,0.65:5")]
    pub policy: String,
    /// Also cache the latents of requests that hit
    #[arg(long)]
    pub insert_on_hit: bool,
    /// Allow matches across resolutions
    #[arg(long)]
    pub cross_resolution: bool,
    /// Expected embedding width of the trace
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Cache capacity (bare number = GB)
    #[arg(long)]
    pub capacity: String,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Report JSON file (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-request JSON-lines log
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Comma-separated capacities (bare numbers = GB)
    #[arg(long)]
    pub capacities: String,
    /// Worker threads (default: available processors)
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Curve CSV file (JSON rows on stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Curve CSV as written by `sweep --out`
    #[arg(long)]
    pub curve: PathBuf,
    /// `exp` or `power`
    #[arg(long)]
    pub family: String,
    /// Entry size for the exponential family
    #[arg(long, default_value = "0.08GB")]
    pub entry_size: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}
