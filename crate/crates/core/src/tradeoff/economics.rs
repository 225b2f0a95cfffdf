//! Memory-for-compute economics of a latent cache.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost parameters of a diffusion generation served through a latent cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheCostParams {
    /// Denoising steps of a full generation.
    pub total_steps: u32,
    /// FLOPs per denoising step.
    pub step_cost: f64,
    /// Steps skipped when a request starts from a cached latent.
    pub reuse_depth: u32,
    /// Size of one cache entry in GB.
    pub entry_size: f64,
}

impl CacheCostParams {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::InvalidInput("total_steps must be positive".into()));
        }
        if !(self.step_cost.is_finite() && self.step_cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "step_cost must be positive, got {}",
                self.step_cost
            )));
        }
        if self.reuse_depth > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "reuse_depth {} exceeds total_steps {}",
                self.reuse_depth, self.total_steps
            )));
        }
        if !(self.entry_size.is_finite() && self.entry_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "entry_size must be positive, got {}",
                self.entry_size
            )));
        }
        Ok(())
    }

    /// Cost of an uncached generation.
    pub fn full_cost(&self) -> f64 {
        f64::from(self.total_steps) * self.step_cost
    }

    /// Compute skipped by one hit.
    pub fn saved_per_hit(&self) -> f64 {
        f64::from(self.reuse_depth) * self.step_cost
    }
}

/// Hit probability as a function of cache capacity (GB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HitRateModel {
    /// `1 - exp(-beta * M / entry_size)`.
    ExponentialSaturation { beta: f64, entry_size: f64 },
    /// `1 - (1 + kappa * M)^(-gamma)`.
    PowerLaw { kappa: f64, gamma: f64 },
    /// Piecewise-linear interpolation over `(capacity GB, hit rate)` points,
    /// held constant beyond the first and last point.
    Empirical { points: Vec<(f64, f64)> },
}

impl HitRateModel {
    pub fn exponential(beta: f64, entry_size: f64) -> Result<Self> {
        let m = HitRateModel::ExponentialSaturation { beta, entry_size };
        m.validate()?;
        Ok(m)
    }

    pub fn power_law(kappa: f64, gamma: f64) -> Result<Self> {
        let m = HitRateModel::PowerLaw { kappa, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(points: Vec<(f64, f64)>) -> Result<Self> {
        let m = HitRateModel::Empirical { points };
        m.validate()?;
        Ok(m)
    }

    /// A model that reports the same hit rate at every capacity.
    pub fn constant(hit_rate: f64) -> Result<Self> {
        Self::empirical(vec![(0.0, hit_rate)])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            HitRateModel::ExponentialSaturation { beta, entry_size } => {
                positive("beta", *beta)?;
                positive("entry_size", *entry_size)
            }
            HitRateModel::PowerLaw { kappa, gamma } => {
                positive("kappa", *kappa)?;
                positive("gamma", *gamma)
            }
            HitRateModel::Empirical { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidInput("empirical model needs at least one point".into()));
                }
                for &(c, h) in points {
                    if !c.is_finite() || !(0.0..=1.0).contains(&h) {
                        return Err(Error::InvalidInput(format!(
                            "empirical point ({c}, {h}) out of range"
                        )));
                    }
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::InvalidInput(
                        "empirical capacities must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn eval(&self, capacity: f64) -> f64 {
        let h = match self {
            HitRateModel::ExponentialSaturation { beta, entry_size } => {
                -(-beta * capacity / entry_size).exp_m1()
            }
            HitRateModel::PowerLaw { kappa, gamma } => {
                1.0 - (-gamma * (kappa * capacity).ln_1p()).exp()
            }
            HitRateModel::Empirical { points } => interpolate(points, capacity),
        };
        h.clamp(0.0, 1.0)
    }

    /// d h / d M, where the model has a closed form.
    fn slope(&self, capacity: f64) -> Option<f64> {
        match self {
            HitRateModel::ExponentialSaturation { beta, entry_size } => {
                let rate = beta / entry_size;
                Some(rate * (-rate * capacity).exp())
            }
            HitRateModel::PowerLaw { kappa, gamma } => {
                Some(gamma * kappa * (-(gamma + 1.0) * (kappa * capacity).ln_1p()).exp())
            }
            HitRateModel::Empirical { .. } => None,
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    // first index whose capacity exceeds x; 1..len by the guards above
    let hi = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[hi - 1];
    let (x1, y1) = points[hi];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn check_capacity(capacity: f64) -> Result<()> {
    if capacity < 0.0 || capacity.is_nan() {
        Err(Error::NegativeCapacity(capacity))
    } else {
        Ok(())
    }
}

/// Hit probability at `capacity` GB, always in `[0, 1]`.
pub fn hit_rate(model: &HitRateModel, capacity: f64) -> Result<f64> {
    check_capacity(capacity)?;
    Ok(model.eval(capacity))
}

/// Expected per-request compute and the quantities derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheEconomics {
    pub capacity_gb: f64,
    pub hit_rate: f64,
    pub full_cost: f64,
    pub saved_per_hit: f64,
    pub expected_saved: f64,
    pub expected_cost: f64,
    /// Whole entries that fit in the capacity.
    pub entry_count: u64,
    /// Expected saved FLOPs per GB of capacity; 0 for an empty cache.
    pub saved_flops_per_gb: f64,
}

impl CacheEconomics {
    /// GB of capacity needed per `flops` of expected saving, at the average
    /// exchange rate of this configuration. Infinite when nothing is saved.
    pub fn gb_per_saved_flops(&self, flops: f64) -> f64 {
        if self.saved_flops_per_gb > 0.0 {
            flops / self.saved_flops_per_gb
        } else {
            f64::INFINITY
        }
    }
}

/// Expected compute per request: `full_cost - h(capacity) * saved_per_hit`.
pub fn expected_compute(
    cost: &CacheCostParams,
    model: &HitRateModel,
    capacity: f64,
) -> Result<CacheEconomics> {
    cost.validate()?;
    let h = hit_rate(model, capacity)?;
    let full_cost = cost.full_cost();
    let saved_per_hit = cost.saved_per_hit();
    let expected_saved = h * saved_per_hit;
    Ok(CacheEconomics {
        capacity_gb: capacity,
        hit_rate: h,
        full_cost,
        saved_per_hit,
        expected_saved,
        expected_cost: full_cost - expected_saved,
        entry_count: (capacity / cost.entry_size).floor() as u64,
        saved_flops_per_gb: if capacity > 0.0 {
            expected_saved / capacity
        } else {
            0.0
        },
    })
}

/// Compute saved by one more GB of capacity, `-dE[C]/dM`, in FLOPs per GB.
pub fn marginal_benefit(cost: &CacheCostParams, model: &HitRateModel, capacity: f64) -> Result<f64> {
    cost.validate()?;
    check_capacity(capacity)?;
    let slope = model.slope(capacity).ok_or(Error::NonDifferentiableModel)?;
    Ok(slope * cost.saved_per_hit())
}
