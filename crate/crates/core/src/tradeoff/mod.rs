//! Closed-form resource trade-off models.
//!
//! Capacities and memory volumes in this module are decimal gigabytes,
//! compute is in FLOPs and bandwidth in bits per pixel.

mod deficit;
mod economics;
mod fit;
mod frontier;

pub use deficit::{comm_cost, memory_deficit, DeficitParams};
pub use economics::{
    expected_compute, hit_rate, marginal_benefit, CacheCostParams, CacheEconomics, HitRateModel,
};
pub use fit::{fit_hit_rate, FitFamily, FitResult};
pub use frontier::{frontier_min_bandwidth, read_samples_csv, FrontierPoint, RateComputeSample};
