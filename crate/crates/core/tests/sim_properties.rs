use std::collections::HashMap;

use proptest::prelude::*;
use trinity_core::cache::{DepthBand, Embedding, ReuseDepthPolicy};
use trinity_core::sim::{fit_curve, replay, sweep, write_curve_csv, Outcome, ReplayReport, SimConfig};
use trinity_core::workload::{generate_trace, GeneratorConfig, Request, Trace};
use trinity_core::{Error, FitFamily, PerResolution, Resolution};

const ENTRY_720P: u64 = 80_000_000;

fn only_720p() -> PerResolution<f64> {
    PerResolution { p720: 1.0, p1080: 0.0, k2: 0.0 }
}

fn workload(n: usize, clusters: usize, zipf: f64, sigma: f64, dim: usize, seed: u64) -> Trace {
    generate_trace(&GeneratorConfig {
        num_requests: n,
        num_clusters: clusters,
        zipf_exponent: zipf,
        noise_sigma: sigma,
        dimension: dim,
        resolution_mix: only_720p(),
        seed,
    })
    .unwrap()
}

fn doubling(start_entries: u64, points: u32) -> Vec<u64> {
    (0..points).map(|i| (start_entries * ENTRY_720P) << i).collect()
}

/// Recomputes every summary field from the per-request log.
fn check_summary(report: &ReplayReport, cfg: &SimConfig) {
    let s = &report.summary;
    let hits: Vec<_> = report.per_request.iter().filter(|r| r.outcome == Outcome::Hit).collect();
    assert_eq!(s.requests, report.per_request.len() as u64);
    assert_eq!(s.hits, hits.len() as u64);
    let rate = if s.requests == 0 { 0.0 } else { s.hits as f64 / s.requests as f64 };
    assert_eq!(s.hit_rate, rate);
    let saved: f64 = hits.iter().map(|r| f64::from(r.depth) * cfg.step_cost.get(r.resolution)).sum();
    assert_eq!(s.total_saved_flops, saved);
    let full: f64 = report
        .per_request
        .iter()
        .map(|r| f64::from(cfg.total_steps) * cfg.step_cost.get(r.resolution))
        .sum();
    assert_eq!(s.total_full_flops, full);
    assert_eq!(s.expected_cost_flops, full - saved);
    let evictions: usize = report.per_request.iter().map(|r| r.evicted.len()).sum();
    assert_eq!(s.evictions, evictions as u64);
    if !hits.is_empty() {
        let depth: u64 = hits.iter().map(|r| u64::from(r.depth)).sum();
        assert_eq!(s.mean_depth_over_hits, depth as f64 / hits.len() as f64);
    }
    for r in &report.per_request {
        assert_eq!(r.outcome == Outcome::Hit, r.depth > 0);
        if r.outcome != Outcome::Hit {
            assert_eq!(r.saved_flops, 0.0);
        }
    }

    // occupancy replayed from inserts and evictions
    let mut sizes = HashMap::new();
    let (mut occupied, mut peak) = (0u64, 0u64);
    for r in &report.per_request {
        for id in &r.evicted {
            occupied -= sizes.remove(id).expect("evicted entry was inserted");
        }
        if let Some(id) = r.inserted_id {
            let size = cfg.entry_bytes(r.resolution);
            sizes.insert(id, size);
            occupied += size;
            peak = peak.max(occupied);
        }
        assert!(occupied <= report.capacity_bytes);
    }
    assert_eq!(s.peak_occupied_bytes, peak);
}

#[test]
fn summaries_recompute_from_records() {
    let trace = generate_trace(&GeneratorConfig {
        num_requests: 600,
        num_clusters: 40,
        zipf_exponent: 0.9,
        noise_sigma: 0.3,
        dimension: 24,
        resolution_mix: PerResolution { p720: 0.5, p1080: 0.3, k2: 0.2 },
        seed: 11,
    })
    .unwrap();
    for (capacity, insert_on_hit, cross) in [(0, false, false), (ENTRY_720P, false, false), (2_000_000_000, false, true), (900_000_000, true, false)] {
        let mut cfg = SimConfig::new(capacity);
        cfg.insert_on_hit = insert_on_hit;
        cfg.cross_resolution_match = cross;
        cfg.step_cost = PerResolution { p720: 1e9, p1080: 2.25e9, k2: 4e9 };
        let report = replay(&trace, &cfg).unwrap();
        check_summary(&report, &cfg);
        let bound = report.summary.requests as f64 * 25.0 * 4e9;
        assert!(report.summary.total_saved_flops <= bound);
    }
}

#[test]
fn replay_is_deterministic() {
    let trace = workload(400, 30, 1.0, 0.2, 16, 5);
    let cfg = SimConfig::new(10 * ENTRY_720P);
    let a = serde_json::to_string(&replay(&trace, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&replay(&trace, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn orthogonal_requests_never_hit() {
    let dim = 32;
    let trace = Trace {
        dimension: dim,
        requests: (0..dim)
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                Request {
                    timestamp_ms: i as i64,
                    request_id: format!("o{i}"),
                    embedding: Embedding::normalized(v).unwrap(),
                    resolution: Resolution::P720,
                }
            })
            .collect(),
    };
    let mut cfg = SimConfig::new(100 * ENTRY_720P);
    cfg.policy = ReuseDepthPolicy::new(vec![DepthBand { above: 0.95, depth: 25 }]).unwrap();
    assert_eq!(replay(&trace, &cfg).unwrap().summary.hit_rate, 0.0);
}

#[test]
fn single_cluster_noiseless_trace() {
    let n = 50;
    let trace = workload(n, 1, 1.0, 0.0, 16, 3);
    for capacity in [ENTRY_720P, 2 * ENTRY_720P, 100 * ENTRY_720P] {
        let s = replay(&trace, &SimConfig::new(capacity)).unwrap().summary;
        assert_eq!(s.hit_rate, (n - 1) as f64 / n as f64);
    }
}

#[test]
fn saturating_workload_has_diminishing_returns() {
    // one wide cluster in 8 dimensions: a request hits when any cached
    // neighbour is close enough, so h(M) ~ 1 - (1 - p)^entries
    let trace = workload(4000, 1, 0.0, 2.0, 8, 42);
    let rows = sweep(&trace, &SimConfig::new(0), &doubling(1, 8), None).unwrap();
    let h: Vec<f64> = rows.iter().map(|r| r.hit_rate).collect();
    assert!(h.windows(2).all(|w| w[0] <= w[1]), "{h:?}");
    let gains: Vec<(f64, f64)> = h.windows(2).map(|w| (w[0], w[1] - w[0])).collect();
    let past_half: Vec<f64> = gains.iter().filter(|g| g.0 > 0.5).map(|g| g.1).collect();
    assert!(past_half.len() >= 2, "{h:?}");
    assert!(past_half.windows(2).all(|w| w[1] <= w[0]), "{h:?}");
}

#[test]
fn sweep_output_is_reproducible() {
    let trace = workload(500, 50, 1.1, 0.05, 16, 9);
    let csv = |jobs| {
        let rows = sweep(&trace, &SimConfig::new(0), &doubling(1, 6), Some(jobs)).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(1), csv(4));
}

#[test]
fn heavy_tail_prefers_power_law() {
    let trace = workload(5000, 1000, 1.1, 0.05, 32, 42);
    let rows = sweep(&trace, &SimConfig::new(0), &doubling(8, 8), None).unwrap();
    let exp = fit_curve(&rows, FitFamily::ExponentialSaturation, 0.08).unwrap();
    let pow = fit_curve(&rows, FitFamily::PowerLaw, 0.08).unwrap();
    assert!(pow.residual < exp.residual, "power {} vs exp {}", pow.residual, exp.residual);
}

#[test]
fn light_tail_prefers_exponential() {
    // uniform popularity over more clusters than the smaller capacities:
    // the curve rises linearly and then flattens abruptly
    let trace = workload(4000, 64, 0.0, 0.05, 32, 1);
    let rows = sweep(&trace, &SimConfig::new(0), &doubling(1, 8), None).unwrap();
    let exp = fit_curve(&rows, FitFamily::ExponentialSaturation, 0.08).unwrap();
    let pow = fit_curve(&rows, FitFamily::PowerLaw, 0.08).unwrap();
    assert!(exp.residual <= pow.residual, "exp {} vs power {}", exp.residual, pow.residual);
}

#[test]
fn dimension_mismatch_propagates_from_sweep() {
    let mut trace = workload(10, 2, 0.0, 0.1, 8, 1);
    trace.dimension = 9;
    assert!(matches!(
        sweep(&trace, &SimConfig::new(0), &[ENTRY_720P], None),
        Err(Error::DimensionMismatch { .. })
    ));
}

fn uniform_trace() -> impl Strategy<Value = (Vec<usize>, u64)> {
    (prop::collection::vec(0usize..12, 0..150), any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With equal entry sizes LRU is a stack algorithm: every hit at a
    /// capacity is also a hit at any larger capacity.
    #[test]
    fn lru_inclusion((keys, seed) in uniform_trace()) {
        let dim = 12;
        let mut rng_state = seed;
        let trace = Trace {
            dimension: dim,
            requests: keys.iter().enumerate().map(|(i, &k)| {
                // identical key -> identical direction, plus a tiny per-request tilt
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let mut v = vec![0.0; dim];
                v[k] = 1.0;
                v[(k + 1) % dim] = ((rng_state >> 40) as f64 / (1u64 << 24) as f64) * 0.05;
                Request {
                    timestamp_ms: i as i64,
                    request_id: format!("k{i}"),
                    embedding: Embedding::normalized(v).unwrap(),
                    resolution: Resolution::P720,
                }
            }).collect(),
        };
        let outcomes = |entries: u64| -> Vec<bool> {
            replay(&trace, &SimConfig::new(entries * ENTRY_720P)).unwrap()
                .per_request.iter().map(|r| r.outcome == Outcome::Hit).collect()
        };
        let mut prev = outcomes(1);
        for entries in 2..=12 {
            let cur = outcomes(entries);
            for (i, (&a, &b)) in prev.iter().zip(&cur).enumerate() {
                prop_assert!(!a || b, "request {} hit at {} entries but not at {}", i, entries - 1, entries);
            }
            prev = cur;
        }
    }
}
