//! Resource trade-off models for AI systems and a trace-driven approximate
//! cache simulator.
//!
//! The crate is organised around three trade-offs and the machinery to
//! study the third one empirically:
//!
//! - [`tradeoff`]: closed-form models. The computation/bandwidth frontier,
//!   the bandwidth/memory deficit model for distributed training, and the
//!   memory/computation economics of caching diffusion latents (hit-rate
//!   families, expected compute, marginal benefit, curve fitting).
//! - [`cache`]: an approximate (similarity-keyed) cache with a reuse-depth
//!   policy and byte-budgeted LRU eviction.
//! - [`workload`]: JSON-lines request traces and a seeded clustered trace
//!   generator.
//! - [`sim`]: trace replay, capacity sweeps and fitting of the resulting
//!   hit-rate curves.
//!
//! All sizes in gigabytes use decimal units (1 GB = 10^9 bytes).

pub mod cache;
pub mod error;
pub mod sim;
pub mod tradeoff;
pub mod units;
pub mod workload;

pub use cache::{
    CacheConfig, CacheEntry, CacheState, DepthBand, Embedding, Inserted, Lookup, ReuseDepthPolicy,
};
pub use error::{Error, Result};
pub use sim::{
    fit_curve, replay, sweep, CurveRow, Outcome, ReplayReport, RequestRecord, SimConfig, Summary,
};
pub use tradeoff::{
    comm_cost, expected_compute, fit_hit_rate, frontier_min_bandwidth, hit_rate, marginal_benefit,
    memory_deficit, CacheCostParams, CacheEconomics, DeficitParams, FitFamily, FitResult,
    FrontierPoint, HitRateModel, RateComputeSample,
};
pub use units::{PerResolution, Resolution};
pub use workload::{generate, generate_trace, load_trace, write_trace, GeneratorConfig, Request, Trace};
