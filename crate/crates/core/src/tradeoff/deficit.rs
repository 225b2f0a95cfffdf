use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memory and communication parameters of a data-parallel training job.
///
/// Memory quantities are in GB. `state_volume` is the combined size of
/// parameters, gradients and optimizer states that every iteration
/// synchronizes; `allreduce_factor` scales it into a per-iteration volume.
/// `deficit_bandwidth_factor` (k) is the extra traffic needed per unit of
/// memory that does not fit on the devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeficitParams {
    pub total_memory: f64,
    pub device_count: u32,
    pub device_memory: f64,
    pub allreduce_factor: f64,
    pub state_volume: f64,
    pub deficit_bandwidth_factor: f64,
}

impl DeficitParams {
    /// Parameters with no synchronization term, covering only the deficit.
    pub fn deficit_only(total_memory: f64, device_count: u32, device_memory: f64, k: f64) -> Self {
        DeficitParams {
            total_memory,
            device_count,
            device_memory,
            allreduce_factor: 0.0,
            state_volume: 0.0,
            deficit_bandwidth_factor: k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("total_memory", self.total_memory),
            ("device_memory", self.device_memory),
            ("allreduce_factor", self.allreduce_factor),
            ("state_volume", self.state_volume),
            ("deficit_bandwidth_factor", self.deficit_bandwidth_factor),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.device_count == 0 {
            return Err(Error::InvalidInput("device_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Model state that does not fit in aggregate device memory, in GB.
pub fn memory_deficit(p: &DeficitParams) -> f64 {
    (p.total_memory - f64::from(p.device_count) * p.device_memory).max(0.0)
}

/// Per-iteration communication volume in GB-equivalents: the regular
/// synchronization term plus `k` times the memory deficit.
pub fn comm_cost(p: &DeficitParams) -> f64 {
    p.allreduce_factor * p.state_volume + p.deficit_bandwidth_factor * memory_deficit(p)
}
