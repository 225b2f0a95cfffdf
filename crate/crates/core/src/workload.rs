//! Request traces: JSON-lines I/O and a seeded clustered generator.
//!
//! # Trace format
//!
//! UTF-8, one JSON object per line. An optional first line `{"dim": D}`
//! fixes the embedding width; otherwise the first record decides it.
//! Each record is
//!
//! ```text
//! {"ts": 12, "id": "r12", "res": "720p", "emb": [0.01, -0.2, ...]}
//! ```
//!
//! Blank lines are ignored. Embeddings are L2-normalized on load and the
//! requests are stably sorted by `ts`.
//!
//! # Generator
//!
//! [`generate`] is deterministic for a given [`GeneratorConfig`]. The draw
//! sequence is part of the contract:
//!
//! 1. The RNG is ChaCha8 (`rand_chacha` 0.9) seeded with `seed_from_u64(seed)`.
//! 2. Each of the `num_clusters` centers draws `dimension` standard normals
//!    (`rand_distr` 0.5 `StandardNormal`) and is normalized.
//! 3. Each request draws, in order: one uniform `f64` in `[0, 1)` that picks
//!    a cluster from the cumulative table of weights `rank^-zipf_exponent`
//!    (rank 1 is cluster 0); `dimension` standard normals scaled by
//!    `noise_sigma / sqrt(dimension)` and added to the center before
//!    renormalizing; one uniform `f64` that picks the resolution from the
//!    cumulative mix in the order 720p, 1080p, 2k.
//!
//! `noise_sigma` is therefore the expected norm of the noise vector, and the
//! cosine between two requests of one cluster is about `1 / (1 + sigma^2)`.
//! Request `i` gets timestamp `i` ms and id `r{i}`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cache::{Embedding, DEFAULT_DIMENSION};
use crate::error::{Error, Result};
use crate::units::{PerResolution, Resolution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Request {
    pub timestamp_ms: i64,
    pub request_id: String,
    pub embedding: Embedding,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub dimension: usize,
    pub requests: Vec<Request>,
}

impl Trace {
    pub fn empty(dimension: usize) -> Self {
        Trace {
            dimension,
            requests: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    dim: Option<usize>,
    ts: Option<i64>,
    id: Option<String>,
    res: Option<Resolution>,
    emb: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    ts: i64,
    id: &'a str,
    res: Resolution,
    emb: &'a [f64],
}

/// Reads a JSON-lines trace.
///
/// `dimension` fixes the expected embedding width; `None` takes it from the
/// header line or, failing that, from the first record.
pub fn load_trace<R: BufRead>(source: R, dimension: Option<usize>) -> Result<Trace> {
    let mut dim = dimension;
    let mut requests = Vec::new();
    let mut seen_content = false;

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let first = !seen_content;
        seen_content = true;

        if let Some(header_dim) = raw.dim {
            if !first || raw.ts.is_some() || raw.id.is_some() || raw.res.is_some() || raw.emb.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "a {\"dim\": D} header may only appear alone on the first line".into(),
                });
            }
            match dim {
                Some(d) if d != header_dim => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: header_dim,
                        line: Some(line_no),
                    })
                }
                _ => dim = Some(header_dim),
            }
            continue;
        }

        let missing = |field: &str| Error::Parse {
            line: line_no,
            message: format!("missing field `{field}`"),
        };
        let ts = raw.ts.ok_or_else(|| missing("ts"))?;
        let id = raw.id.ok_or_else(|| missing("id"))?;
        let res = raw.res.ok_or_else(|| missing("res"))?;
        let emb = raw.emb.ok_or_else(|| missing("emb"))?;

        let expected = *dim.get_or_insert(emb.len());
        if emb.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: emb.len(),
                line: Some(line_no),
            });
        }
        let embedding = Embedding::normalized(emb).map_err(|e| match e {
            Error::ZeroNormEmbedding { .. } => Error::ZeroNormEmbedding { line: Some(line_no) },
            other => other,
        })?;
        requests.push(Request {
            timestamp_ms: ts,
            request_id: id,
            embedding,
            resolution: res,
        });
    }

    requests.sort_by_key(|r| r.timestamp_ms);
    Ok(Trace {
        dimension: dim.unwrap_or(DEFAULT_DIMENSION),
        requests,
    })
}

/// Writes `trace` as JSON-lines with a leading `{"dim": D}` header.
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    writeln!(out, "{{\"dim\":{}}}", trace.dimension)?;
    for r in &trace.requests {
        let rec = RecordOut {
            ts: r.timestamp_ms,
            id: &r.request_id,
            res: r.resolution,
            emb: r.embedding.as_slice(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_requests: usize,
    pub num_clusters: usize,
    pub zipf_exponent: f64,
    pub noise_sigma: f64,
    pub dimension: usize,
    pub resolution_mix: PerResolution<f64>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_requests: 10_000,
            num_clusters: 100,
            zipf_exponent: 1.0,
            noise_sigma: 0.05,
            dimension: DEFAULT_DIMENSION,
            resolution_mix: PerResolution {
                p720: 1.0,
                p1080: 0.0,
                k2: 0.0,
            },
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.num_clusters == 0 {
            return bad("num_clusters must be at least 1".into());
        }
        if self.dimension == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad(format!("zipf_exponent must be >= 0, got {}", self.zipf_exponent));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.resolution_mix.iter().any(|(_, p)| !(p.is_finite() && p >= 0.0)) {
            return bad("resolution_mix probabilities must be nonnegative".into());
        }
        let total: f64 = self.resolution_mix.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("resolution_mix must sum to 1, sums to {total}"));
        }
        Ok(())
    }
}

/// A generated trace with the cluster each request was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub trace: Trace,
    pub cluster_of: Vec<usize>,
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut last_positive = 0;
    let mut cdf: Vec<f64> = weights
        .enumerate()
        .map(|(i, w)| {
            if w > 0.0 {
                last_positive = i;
            }
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    for (i, c) in cdf.iter_mut().enumerate() {
        *c = if i >= last_positive { 1.0 } else { *c / total };
    }
    cdf
}

/// Index of the first cumulative weight strictly above `u`, skipping
/// zero-weight slots.
fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn generate(config: &GeneratorConfig) -> Result<GeneratedTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dimension;

    let centers: Vec<Embedding> = (0..config.num_clusters)
        .map(|_| loop {
            if let Ok(e) = Embedding::normalized(gaussian_vector(&mut rng, dim, 1.0)) {
                break e;
            }
        })
        .collect();

    let cluster_cdf = cumulative((1..=config.num_clusters).map(|rank| (rank as f64).powf(-config.zipf_exponent)));
    let res_cdf = cumulative(config.resolution_mix.iter().map(|(_, p)| p));
    let noise_scale = config.noise_sigma / (dim as f64).sqrt();

    let mut requests = Vec::with_capacity(config.num_requests);
    let mut cluster_of = Vec::with_capacity(config.num_requests);
    for i in 0..config.num_requests {
        let cluster = pick(&cluster_cdf, rng.random::<f64>());
        let noise = gaussian_vector(&mut rng, dim, noise_scale);
        let raw: Vec<f64> = centers[cluster]
            .as_slice()
            .iter()
            .zip(&noise)
            .map(|(c, n)| c + n)
            .collect();
        let embedding = Embedding::normalized(raw).unwrap_or_else(|_| centers[cluster].clone());
        let resolution = Resolution::ALL[pick(&res_cdf, rng.random::<f64>())];
        requests.push(Request {
            timestamp_ms: i as i64,
            request_id: format!("r{i}"),
            embedding,
            resolution,
        });
        cluster_of.push(cluster);
    }

    Ok(GeneratedTrace {
        trace: Trace {
            dimension: dim,
            requests,
        },
        cluster_of,
    })
}

pub fn generate_trace(config: &GeneratorConfig) -> Result<Trace> {
    generate(config).map(|g| g.trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ts: i64, id: &str, emb: &[f64]) -> String {
        serde_json::json!({"ts": ts, "id": id, "res": "720p", "emb": emb}).to_string()
    }

    #[test]
    fn empty_stream() {
        let t = load_trace(&b""[..], Some(768)).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dimension, 768);
    }

    #[test]
    fn sorts_by_timestamp_stably() {
        let src = [
            record(5, "a", &[1.0, 0.0]),
            record(3, "b", &[0.0, 2.0]),
            record(5, "c", &[1.0, 1.0]),
        ]
        .join("\n");
        let t = load_trace(src.as_bytes(), None).unwrap();
        let order: Vec<_> = t.requests.iter().map(|r| (r.timestamp_ms, r.request_id.as_str())).collect();
        assert_eq!(order, vec![(3, "b"), (5, "a"), (5, "c")]);
        assert_eq!(t.requests[0].embedding.as_slice(), &[0.0, 1.0]);
        assert_eq!(t.dimension, 2);
    }

    #[test]
    fn short_embedding_reports_line() {
        let good = vec![0.1; 768];
        let short = vec![0.1; 767];
        let src = format!("{}\n{}\n", record(0, "a", &good), record(1, "b", &short));
        match load_trace(src.as_bytes(), Some(768)) {
            Err(Error::DimensionMismatch { expected: 768, found: 767, line: Some(2) }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_sets_dimension() {
        let src = format!("{{\"dim\": 3}}\n{}\n", record(0, "a", &[1.0, 0.0]));
        assert!(matches!(
            load_trace(src.as_bytes(), None),
            Err(Error::DimensionMismatch { expected: 3, found: 2, line: Some(2) })
        ));
        assert!(matches!(
            load_trace("{\"dim\": 3}\n".as_bytes(), Some(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        let src = format!("{}\nnot json\n", record(0, "a", &[1.0]));
        assert!(matches!(load_trace(src.as_bytes(), None), Err(Error::Parse { line: 2, .. })));
        let src = r#"{"ts": 1, "id": "x", "emb": [1.0]}"#;
        assert!(matches!(load_trace(src.as_bytes(), None), Err(Error::Parse { line: 1, .. })));
        let src = r#"{"ts": 1, "id": "x", "res": "8k", "emb": [1.0]}"#;
        assert!(matches!(load_trace(src.as_bytes(), None), Err(Error::Parse { line: 1, .. })));
        let src = format!("{}\n{{\"dim\": 1}}\n", record(0, "a", &[1.0]));
        assert!(matches!(load_trace(src.as_bytes(), None), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn zero_norm_rejected() {
        let src = format!("\n{}\n", record(0, "a", &[0.0, 0.0]));
        assert!(matches!(
            load_trace(src.as_bytes(), None),
            Err(Error::ZeroNormEmbedding { line: Some(2) })
        ));
    }

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            num_requests: 200,
            num_clusters: 10,
            zipf_exponent: 1.0,
            noise_sigma: 0.05,
            dimension: 16,
            resolution_mix: PerResolution { p720: 0.5, p1080: 0.3, k2: 0.2 },
            seed: 7,
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trace(&generate_trace(&small_config()).unwrap(), &mut a).unwrap();
        write_trace(&generate_trace(&small_config()).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);

        let other = GeneratorConfig { seed: 8, ..small_config() };
        let mut c = Vec::new();
        write_trace(&generate_trace(&other).unwrap(), &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_single_cluster_is_a_point_mass() {
        let cfg = GeneratorConfig { num_clusters: 1, noise_sigma: 0.0, ..small_config() };
        let t = generate_trace(&cfg).unwrap();
        assert!(t.requests.windows(2).all(|w| w[0].embedding == w[1].embedding));
    }

    #[test]
    fn generated_embeddings_are_unit() {
        let t = generate_trace(&small_config()).unwrap();
        for r in &t.requests {
            let n = r.embedding.cosine(&r.embedding).sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = generate_trace(&small_config()).unwrap();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let back = load_trace(buf.as_slice(), None).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&GeneratorConfig { num_clusters: 0, ..small_config() }).is_err());
        assert!(generate(&GeneratorConfig { zipf_exponent: -1.0, ..small_config() }).is_err());
        let mix = PerResolution { p720: 0.5, p1080: 0.3, k2: 0.3 };
        assert!(generate(&GeneratorConfig { resolution_mix: mix, ..small_config() }).is_err());
    }

    #[test]
    fn pick_skips_zero_weight_slots() {
        let cdf = cumulative([0.0, 1.0, 0.0].into_iter());
        assert_eq!(pick(&cdf, 0.0), 1);
        assert_eq!(pick(&cdf, 0.999), 1);
        let cdf = cumulative([0.1, 0.2, 0.7, 0.0].into_iter());
        assert_eq!(cdf[2], 1.0);
        assert_eq!(pick(&cdf, 1.0 - f64::EPSILON), 2);
    }
}
