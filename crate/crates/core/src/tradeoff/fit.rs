//! Least-squares fitting of the closed-form hit-rate families.
//!
//! Both families linearize under `y = ln(1 - h)`:
//! exponential saturation gives `y = -beta * (M / s_e)` and the power law
//! gives `y = -gamma * ln(1 + kappa * M)`. The exponential fit is a single
//! regression through the origin. The power law regresses `gamma` in closed
//! form for each candidate `kappa`, with `kappa` chosen by a log-spaced grid
//! followed by a bisecting refinement. Candidates are ranked by RMS residual
//! in hit-rate units.

use serde::{Deserialize, Serialize};

use super::economics::{hit_rate, HitRateModel};
use crate::error::{Error, Result};

const KAPPA_GRID_POINTS: usize = 64;
const KAPPA_GRID_DECADES: (f64, f64) = (-6.0, 6.0);
const REFINEMENT_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    ExponentialSaturation,
    PowerLaw,
}

impl std::str::FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" | "exponential_saturation" => Ok(FitFamily::ExponentialSaturation),
            "power" | "power_law" | "powerlaw" => Ok(FitFamily::PowerLaw),
            other => Err(Error::InvalidInput(format!(
                "unknown fit family {other:?} (expected exp or power)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HitRateModel,
    /// Root-mean-square residual in hit-rate units.
    pub residual: f64,
}

/// Fits `family` to `(capacity GB, hit rate)` observations.
///
/// Requires at least three points with distinct positive capacities and
/// hit rates in `[0, 1)`, not all zero.
pub fn fit_hit_rate(points: &[(f64, f64)], family: FitFamily, entry_size: f64) -> Result<FitResult> {
    check_points(points)?;
    match family {
        FitFamily::ExponentialSaturation => fit_exponential(points, entry_size),
        FitFamily::PowerLaw => fit_power_law(points),
    }
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    let degenerate = |msg: String| Err(Error::DegeneratePoints(msg));
    if points.len() < 3 {
        return degenerate(format!("need at least 3 points, got {}", points.len()));
    }
    for &(c, h) in points {
        if !(c.is_finite() && c > 0.0) {
            return degenerate(format!("capacity {c} is not positive"));
        }
        if h.is_nan() || h < 0.0 {
            return degenerate(format!("hit rate {h} is outside [0, 1)"));
        }
        if h >= 1.0 {
            return degenerate(format!("hit rate {h} at capacity {c} leaves ln(1 - h) undefined"));
        }
    }
    let mut caps: Vec<f64> = points.iter().map(|p| p.0).collect();
    caps.sort_by(f64::total_cmp);
    if caps.windows(2).any(|w| w[0] == w[1]) {
        return degenerate("capacities must be distinct".into());
    }
    if points.iter().all(|p| p.1 == 0.0) {
        return degenerate("all hit rates are zero".into());
    }
    Ok(())
}

fn rms_residual(model: &HitRateModel, points: &[(f64, f64)]) -> f64 {
    let sse: f64 = points
        .iter()
        .map(|&(c, h)| {
            let r = hit_rate(model, c).expect("capacities validated") - h;
            r * r
        })
        .sum();
    (sse / points.len() as f64).sqrt()
}

/// Slope of `y = -slope * x` by least squares through the origin.
fn origin_slope(xs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sxy, sxx) = xs.fold((0.0, 0.0), |(sxy, sxx), (x, y)| (sxy + x * y, sxx + x * x));
    -sxy / sxx
}

fn fit_exponential(points: &[(f64, f64)], entry_size: f64) -> Result<FitResult> {
    if !(entry_size.is_finite() && entry_size > 0.0) {
        return Err(Error::InvalidInput(format!("entry_size must be positive, got {entry_size}")));
    }
    let beta = origin_slope(points.iter().map(|&(c, h)| (c / entry_size, (-h).ln_1p())));
    let model = HitRateModel::ExponentialSaturation { beta, entry_size };
    let residual = rms_residual(&model, points);
    Ok(FitResult { model, residual })
}

fn power_law_at(points: &[(f64, f64)], log10_kappa: f64) -> (HitRateModel, f64) {
    let kappa = 10f64.powf(log10_kappa);
    let gamma = origin_slope(points.iter().map(|&(c, h)| ((kappa * c).ln_1p(), (-h).ln_1p())));
    let model = HitRateModel::PowerLaw { kappa, gamma };
    let residual = rms_residual(&model, points);
    (model, residual)
}

fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    let mut caps: Vec<f64> = points.iter().map(|p| p.0).collect();
    caps.sort_by(f64::total_cmp);
    let n = caps.len();
    let median = if n % 2 == 1 {
        caps[n / 2]
    } else {
        0.5 * (caps[n / 2 - 1] + caps[n / 2])
    };

    let (lo, hi) = KAPPA_GRID_DECADES;
    let offset = -median.log10();
    let mut step = (hi - lo) / (KAPPA_GRID_POINTS - 1) as f64;

    let mut best_log = lo + offset;
    let (mut best_model, mut best_res) = power_law_at(points, best_log);
    for i in 1..KAPPA_GRID_POINTS {
        let log_k = lo + offset + step * i as f64;
        let (model, res) = power_law_at(points, log_k);
        if res < best_res {
            best_log = log_k;
            best_model = model;
            best_res = res;
        }
    }

    for _ in 0..REFINEMENT_HALVINGS {
        step *= 0.5;
        let center = best_log;
        for log_k in [center - step, center + step] {
            let (model, res) = power_law_at(points, log_k);
            if res < best_res {
                best_log = log_k;
                best_model = model;
                best_res = res;
            }
        }
    }

    Ok(FitResult {
        model: best_model,
        residual: best_res,
    })
}
