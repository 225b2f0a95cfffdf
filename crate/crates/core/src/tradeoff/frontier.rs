use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measured operating point of a compress/reconstruct pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateComputeSample {
    /// Bits per pixel.
    #[serde(rename = "bandwidth_bpp")]
    pub bandwidth: f64,
    /// Decoder FLOPs.
    #[serde(rename = "compute_flops")]
    pub compute: f64,
    pub quality: f64,
}

impl RateComputeSample {
    pub fn new(bandwidth: f64, compute: f64, quality: f64) -> Self {
        RateComputeSample {
            bandwidth,
            compute,
            quality,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth >= 0.0 && self.compute >= 0.0) || self.quality.is_nan() {
            return Err(Error::InvalidInput(format!(
                "bandwidth and compute must be nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub bandwidth: f64,
    /// Index of the achieving sample in the input list.
    pub sample_index: usize,
    pub sample: RateComputeSample,
}

/// Smallest bandwidth among samples reaching `quality_target` within
/// `compute_budget` FLOPs. Ties go to the earliest sample.
pub fn frontier_min_bandwidth(
    samples: &[RateComputeSample],
    quality_target: f64,
    compute_budget: f64,
) -> Result<FrontierPoint> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("frontier needs at least one sample".into()));
    }
    for s in samples {
        s.validate()?;
    }
    let mut best: Option<FrontierPoint> = None;
    for (i, s) in samples.iter().enumerate() {
        if s.quality >= quality_target && s.compute <= compute_budget {
            match best {
                Some(b) if b.bandwidth <= s.bandwidth => {}
                _ => {
                    best = Some(FrontierPoint {
                        bandwidth: s.bandwidth,
                        sample_index: i,
                        sample: *s,
                    })
                }
            }
        }
    }
    best.ok_or(Error::Infeasible {
        quality_target,
        compute_budget,
    })
}

/// Reads samples from CSV with header `bandwidth_bpp,compute_flops,quality`.
pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<RateComputeSample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let samples = reader
        .deserialize::<RateComputeSample>()
        .map(|row| row.map_err(crate::sim::csv_error))
        .collect::<Result<Vec<_>>>()?;
    for s in &samples {
        s.validate()?;
    }
    Ok(samples)
}
