//! Trace replay against the approximate cache, capacity sweeps, and fitting
//! of the resulting hit-rate curves.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheState, Lookup, ReuseDepthPolicy, DEFAULT_STORED_DEPTHS};
use crate::error::{Error, Result};
use crate::tradeoff::{fit_hit_rate, FitFamily, FitResult};
use crate::units::{bytes_to_gb, gb_to_bytes, PerResolution, Resolution, DEFAULT_LATENT_BYTES};
use crate::workload::Trace;

/// Denoising steps of a full generation.
pub const DEFAULT_TOTAL_STEPS: u32 = 50;
/// FLOPs per denoising step.
pub const DEFAULT_STEP_COST: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Cache budget in bytes.
    pub capacity: u64,
    pub policy: ReuseDepthPolicy,
    pub stored_depths: Vec<u32>,
    pub total_steps: u32,
    pub step_cost: PerResolution<f64>,
    pub latent_bytes: PerResolution<u64>,
    /// Also cache the request's own latents when it hits.
    pub insert_on_hit: bool,
    /// Let a request match entries generated at another resolution.
    pub cross_resolution_match: bool,
}

impl SimConfig {
    pub fn new(capacity: u64) -> Self {
        SimConfig {
            capacity,
            policy: ReuseDepthPolicy::default(),
            stored_depths: DEFAULT_STORED_DEPTHS.to_vec(),
            total_steps: DEFAULT_TOTAL_STEPS,
            step_cost: PerResolution::uniform(DEFAULT_STEP_COST),
            latent_bytes: DEFAULT_LATENT_BYTES,
            insert_on_hit: false,
            cross_resolution_match: false,
        }
    }

    pub fn with_capacity(&self, capacity: u64) -> Self {
        SimConfig {
            capacity,
            ..self.clone()
        }
    }

    /// Bytes of one cache entry at `res`.
    pub fn entry_bytes(&self, res: Resolution) -> u64 {
        self.stored_depths.len() as u64 * self.latent_bytes.get(res)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.check_depths(&self.stored_depths)?;
        if let Some(&d) = self.stored_depths.iter().find(|&&d| d > self.total_steps) {
            return Err(Error::InvalidInput(format!(
                "stored depth {d} exceeds total_steps {}",
                self.total_steps
            )));
        }
        if self.step_cost.iter().any(|(_, c)| !(c.is_finite() && c > 0.0)) {
            return Err(Error::InvalidInput("step costs must be positive".into()));
        }
        if self.latent_bytes.iter().any(|(_, b)| b == 0) {
            return Err(Error::InvalidInput("latent sizes must be positive".into()));
        }
        Ok(())
    }

    fn cache_config(&self, dimension: usize) -> CacheConfig {
        CacheConfig {
            capacity: self.capacity,
            dimension,
            stored_depths: self.stored_depths.clone(),
            latent_bytes: self.latent_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Hit,
    Miss,
    /// The request's entry alone exceeds the capacity; counted as a miss.
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub resolution: Resolution,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    pub depth: u32,
    pub saved_flops: f64,
    /// Id assigned to the entry cached for this request, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inserted_id: Option<u64>,
    pub evicted: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub requests: u64,
    pub hits: u64,
    pub hit_rate: f64,
    pub mean_depth_over_hits: f64,
    pub total_saved_flops: f64,
    pub total_full_flops: f64,
    pub expected_cost_flops: f64,
    pub peak_occupied_bytes: u64,
    pub evictions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub capacity_bytes: u64,
    pub summary: Summary,
    pub per_request: Vec<RequestRecord>,
}

impl ReplayReport {
    /// Writes the per-request records as JSON-lines.
    pub fn write_request_log<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.per_request {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct Tally {
    hits: u64,
    depth_sum: u64,
    saved: f64,
    full: f64,
    evictions: u64,
}

fn run(trace: &Trace, config: &SimConfig, mut records: Option<&mut Vec<RequestRecord>>) -> Result<(Summary, u64)> {
    config.validate()?;
    let mut cache = CacheState::new(config.cache_config(trace.dimension));
    let mut t = Tally::default();

    for req in &trace.requests {
        let res = req.resolution;
        let step_cost = config.step_cost.get(res);
        t.full += f64::from(config.total_steps) * step_cost;
        let filter = (!config.cross_resolution_match).then_some(res);

        let lookup = cache.lookup(&req.embedding, &config.policy, filter)?;
        let (outcome, matched, depth) = match lookup {
            Lookup::Hit { entry_id, similarity, depth } => (Outcome::Hit, Some((entry_id, similarity)), depth),
            Lookup::Miss => (Outcome::Miss, None, 0),
        };
        let saved = f64::from(depth) * step_cost;

        let mut outcome = outcome;
        let mut inserted_id = None;
        let mut evicted = Vec::new();
        if outcome == Outcome::Miss || config.insert_on_hit {
            match cache.insert(req.embedding.clone(), res) {
                Ok(ins) => {
                    inserted_id = Some(ins.entry_id);
                    evicted = ins.evicted;
                }
                Err(Error::EntryTooLarge { .. }) => {
                    if outcome == Outcome::Miss {
                        outcome = Outcome::TooLarge;
                    }
                }
                Err(e) => return Err(e),
            }
        }

        if outcome == Outcome::Hit {
            t.hits += 1;
            t.depth_sum += u64::from(depth);
            t.saved += saved;
        }
        t.evictions += evicted.len() as u64;

        if let Some(out) = records.as_deref_mut() {
            out.push(RequestRecord {
                request_id: req.request_id.clone(),
                resolution: res,
                outcome,
                matched_id: matched.map(|m| m.0),
                similarity: matched.map(|m| m.1),
                depth,
                saved_flops: saved,
                inserted_id,
                evicted,
            });
        }
    }

    let requests = trace.requests.len() as u64;
    let summary = Summary {
        requests,
        hits: t.hits,
        hit_rate: if requests == 0 { 0.0 } else { t.hits as f64 / requests as f64 },
        mean_depth_over_hits: if t.hits == 0 { 0.0 } else { t.depth_sum as f64 / t.hits as f64 },
        total_saved_flops: t.saved,
        total_full_flops: t.full,
        expected_cost_flops: t.full - t.saved,
        peak_occupied_bytes: cache.peak_occupied(),
        evictions: t.evictions,
    };
    Ok((summary, config.capacity))
}

/// Replays `trace` in order through a fresh cache.
///
/// Each request is looked up; a hit saves `depth * step_cost` FLOPs, a miss
/// caches the request's latents (evicting LRU entries as needed).
pub fn replay(trace: &Trace, config: &SimConfig) -> Result<ReplayReport> {
    let mut records = Vec::with_capacity(trace.requests.len());
    let (summary, capacity_bytes) = run(trace, config, Some(&mut records))?;
    Ok(ReplayReport {
        capacity_bytes,
        summary,
        per_request: records,
    })
}

/// Replay without per-request records.
pub fn replay_summary(trace: &Trace, config: &SimConfig) -> Result<Summary> {
    run(trace, config, None).map(|(s, _)| s)
}

/// One point of a hit-rate-versus-capacity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub capacity_bytes: u64,
    pub hit_rate: f64,
    pub saved_flops: f64,
    pub expected_cost_flops: f64,
}

/// Replays `trace` once per capacity, each with a fresh cache.
///
/// Capacity points run concurrently on up to `jobs` threads (all available
/// processors when `None`). Rows come back sorted by capacity.
pub fn sweep(trace: &Trace, config: &SimConfig, capacities: &[u64], jobs: Option<usize>) -> Result<Vec<CurveRow>> {
    if capacities.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one capacity".into()));
    }
    let mut caps = capacities.to_vec();
    caps.sort_unstable();
    if caps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("sweep capacities must be distinct".into()));
    }
    config.validate()?;

    let point = |&capacity: &u64| -> Result<CurveRow> {
        let s = replay_summary(trace, &config.with_capacity(capacity))?;
        Ok(CurveRow {
            capacity_bytes: capacity,
            hit_rate: s.hit_rate,
            saved_flops: s.total_saved_flops,
            expected_cost_flops: s.expected_cost_flops,
        })
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| caps.par_iter().map(point).collect())
}

/// Fits a hit-rate family to a sweep. Zero-capacity rows are dropped since
/// both families pass through the origin.
pub fn fit_curve(curve: &[CurveRow], family: FitFamily, entry_size_gb: f64) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = curve
        .iter()
        .filter(|r| r.capacity_bytes > 0)
        .map(|r| (bytes_to_gb(r.capacity_bytes), r.hit_rate))
        .collect();
    fit_hit_rate(&points, family, entry_size_gb)
}

pub const CURVE_CSV_HEADER: &str = "capacity_gb,hit_rate,saved_flops,expected_cost_flops";

pub fn write_curve_csv<W: Write>(curve: &[CurveRow], mut out: W) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for r in curve {
        writeln!(
            out,
            "{},{},{},{}",
            bytes_to_gb(r.capacity_bytes),
            r.hit_rate,
            r.saved_flops,
            r.expected_cost_flops
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CurveCsvRow {
    capacity_gb: f64,
    hit_rate: f64,
    saved_flops: f64,
    expected_cost_flops: f64,
}

pub fn read_curve_csv<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != CURVE_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {CURVE_CSV_HEADER}"),
        });
    }
    reader
        .deserialize::<CurveCsvRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            if row.capacity_gb.is_nan() || row.capacity_gb < 0.0 {
                return Err(Error::InvalidInput(format!("negative capacity {}", row.capacity_gb)));
            }
            Ok(CurveRow {
                capacity_bytes: gb_to_bytes(row.capacity_gb),
                hit_rate: row.hit_rate,
                saved_flops: row.saved_flops,
                expected_cost_flops: row.expected_cost_flops,
            })
        })
        .collect()
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}
