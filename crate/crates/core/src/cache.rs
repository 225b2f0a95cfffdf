//! Similarity-keyed latent cache with reuse-depth retrieval and LRU
//! eviction under a byte budget.
//!
//! Recency is driven by a logical tick that advances on every lookup and
//! every insert, so a replay is reproducible bit for bit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{PerResolution, DEFAULT_LATENT_BYTES};

pub use crate::units::Resolution;

/// Default embedding width (CLIP ViT-L/14 text embeddings).
pub const DEFAULT_DIMENSION: usize = 768;

/// Denoising steps at which latents are kept for every entry.
pub const DEFAULT_STORED_DEPTHS: [u32; 5] = [5, 10, 15, 20, 25];

const UNIT_TOLERANCE: f64 = 1e-12;

/// Coordinates per partial-sum step of the pruned nearest-neighbor scan.
const PRUNE_BLOCK: usize = 16;
/// Covers rounding in the bound; far above the error of a 768-term dot product.
const PRUNE_SLACK: f64 = 1e-9;

const VACANT: usize = usize::MAX;

/// `out[k]` is the L2 norm of `v[k * PRUNE_BLOCK..]`; the last element is 0.
fn block_tail_norms(v: &[f64]) -> Vec<f64> {
    let blocks = v.len().div_ceil(PRUNE_BLOCK);
    let mut out = vec![0.0; blocks + 1];
    let mut acc = 0.0;
    for k in (0..blocks).rev() {
        let start = k * PRUNE_BLOCK;
        let end = (start + PRUNE_BLOCK).min(v.len());
        acc += v[start..end].iter().map(|x| x * x).sum::<f64>();
        out[k] = acc.sqrt();
    }
    out
}

/// An L2-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length. Vectors already within 1e-12 of
    /// unit length are kept as given, which makes normalization idempotent.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = dot(&values, &values).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::ZeroNormEmbedding { line: None });
        }
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Cosine similarity, i.e. the dot product of the two unit vectors.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Dot product with a fixed four-lane accumulation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..4 {
            acc[i] += ca[i] * cb[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Requests whose best similarity is strictly above `above` reuse `depth`
/// denoising steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBand {
    pub above: f64,
    pub depth: u32,
}

/// Ordered similarity bands mapping a similarity score to a reuse depth.
///
/// Bands are scanned from the highest bound down; a similarity at or below
/// every bound maps to depth 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseDepthPolicy {
    bands: Vec<DepthBand>,
}

impl Default for ReuseDepthPolicy {
    fn default() -> Self {
        let bands = [(0.95, 25), (0.90, 20), (0.85, 15), (0.75, 10), (0.65, 5), (f64::NEG_INFINITY, 0)]
            .into_iter()
            .map(|(above, depth)| DepthBand { above, depth })
            .collect();
        ReuseDepthPolicy { bands }
    }
}

impl ReuseDepthPolicy {
    pub fn new(bands: Vec<DepthBand>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidInput("reuse-depth policy needs at least one band".into()));
        }
        if bands.iter().any(|b| b.above.is_nan()) {
            return Err(Error::InvalidInput("band bound is NaN".into()));
        }
        for w in bands.windows(2) {
            if w[0].above <= w[1].above {
                return Err(Error::InvalidInput("band bounds must be strictly decreasing".into()));
            }
            if w[0].depth < w[1].depth {
                return Err(Error::InvalidInput("band depths must be nonincreasing".into()));
            }
        }
        Ok(ReuseDepthPolicy { bands })
    }

    pub fn bands(&self) -> &[DepthBand] {
        &self.bands
    }

    pub fn max_depth(&self) -> u32 {
        self.bands.iter().map(|b| b.depth).max().unwrap_or(0)
    }

    /// Every nonzero depth must be one the cache actually stores.
    pub fn check_depths(&self, stored_depths: &[u32]) -> Result<()> {
        match self
            .bands
            .iter()
            .find(|b| b.depth != 0 && !stored_depths.contains(&b.depth))
        {
            Some(b) => Err(Error::InvalidInput(format!(
                "policy depth {} is not among stored depths {stored_depths:?}",
                b.depth
            ))),
            None => Ok(()),
        }
    }

    /// Similarities at or below this value map to depth 0.
    pub fn hit_floor(&self) -> f64 {
        self.bands
            .iter()
            .rev()
            .find(|b| b.depth > 0)
            .map_or(f64::INFINITY, |b| b.above)
    }

    pub fn depth_for(&self, similarity: f64) -> u32 {
        self.bands
            .iter()
            .find(|b| similarity > b.above)
            .map_or(0, |b| b.depth)
    }
}

pub fn reuse_depth(similarity: f64, policy: &ReuseDepthPolicy) -> u32 {
    policy.depth_for(similarity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: u64,
    pub dimension: usize,
    pub stored_depths: Vec<u32>,
    pub latent_bytes: PerResolution<u64>,
}

impl CacheConfig {
    pub fn new(capacity: u64) -> Self {
        CacheConfig {
            capacity,
            dimension: DEFAULT_DIMENSION,
            stored_depths: DEFAULT_STORED_DEPTHS.to_vec(),
            latent_bytes: DEFAULT_LATENT_BYTES,
        }
    }

    /// Footprint of one entry: every stored depth at the resolution's latent size.
    pub fn entry_bytes(&self, res: Resolution) -> u64 {
        self.stored_depths.len() as u64 * self.latent_bytes.get(res)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheEntry {
    pub entry_id: u64,
    pub embedding: Embedding,
    pub resolution: Resolution,
    pub stored_depths: Vec<u32>,
    pub byte_size: u64,
    pub last_used: u64,
    #[serde(skip)]
    tail_norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lookup {
    Hit {
        entry_id: u64,
        similarity: f64,
        depth: u32,
    },
    Miss,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inserted {
    pub entry_id: u64,
    /// Evicted entry ids, oldest first.
    pub evicted: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    config: CacheConfig,
    entries: Vec<CacheEntry>,
    /// Position in `entries` by entry id; `VACANT` once evicted.
    slot_of: Vec<usize>,
    /// `(last_used, entry_id)` of every resident entry; the first element is the LRU victim.
    recency: BTreeSet<(u64, u64)>,
    occupied: u64,
    peak_occupied: u64,
    tick: u64,
    next_id: u64,
}

impl CacheState {
    pub fn new(config: CacheConfig) -> Self {
        CacheState {
            config,
            entries: Vec::new(),
            slot_of: Vec::new(),
            recency: BTreeSet::new(),
            occupied: 0,
            peak_occupied: 0,
            tick: 0,
            next_id: 0,
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn capacity(&self) -> u64 {
        self.config.capacity
    }

    pub fn occupied(&self) -> u64 {
        self.occupied
    }

    pub fn peak_occupied(&self) -> u64 {
        self.peak_occupied
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter()
    }

    pub fn get(&self, entry_id: u64) -> Option<&CacheEntry> {
        self.slot(entry_id).map(|i| &self.entries[i])
    }

    fn slot(&self, entry_id: u64) -> Option<usize> {
        self.slot_of
            .get(entry_id as usize)
            .copied()
            .filter(|&s| s != VACANT)
    }

    fn check_dimension(&self, e: &Embedding) -> Result<()> {
        if e.dim() != self.config.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.config.dimension,
                found: e.dim(),
                line: None,
            });
        }
        Ok(())
    }

    /// Most similar resident entry, optionally restricted to one resolution.
    ///
    /// Equal similarities prefer the most recently used entry, then the
    /// lowest id.
    pub fn nearest(&self, query: &Embedding, resolution: Option<Resolution>) -> Result<Option<(u64, f64)>> {
        self.scan(query, resolution, f64::NEG_INFINITY)
    }

    /// Exact argmax over entries whose similarity may exceed `floor`.
    ///
    /// Entries are visited most recent first. Each candidate's dot product
    /// is accumulated block by block; once the partial sum plus a
    /// Cauchy-Schwarz bound on the remaining coordinates falls below both
    /// `floor` and the best similarity so far, the candidate is dropped.
    /// Survivors are rescored with [`dot`] so reported similarities do not
    /// depend on pruning.
    fn scan(&self, query: &Embedding, resolution: Option<Resolution>, floor: f64) -> Result<Option<(u64, f64)>> {
        self.check_dimension(query)?;
        let q = query.as_slice();
        let q_tails = block_tail_norms(q);
        let mut best: Option<(&CacheEntry, f64)> = None;
        'entries: for &(_, id) in self.recency.iter().rev() {
            let e = &self.entries[self.slot_of[id as usize]];
            if resolution.is_some_and(|r| r != e.resolution) {
                continue;
            }
            let threshold = best.map_or(floor, |(_, s)| s.max(floor));
            if threshold > f64::NEG_INFINITY {
                let v = e.embedding.as_slice();
                let mut partial = 0.0;
                for (k, (qb, vb)) in q.chunks(PRUNE_BLOCK).zip(v.chunks(PRUNE_BLOCK)).enumerate() {
                    partial += qb.iter().zip(vb).map(|(a, b)| a * b).sum::<f64>();
                    if partial + q_tails[k + 1] * e.tail_norms[k + 1] + PRUNE_SLACK < threshold {
                        continue 'entries;
                    }
                }
            }
            let sim = query.cosine(&e.embedding);
            if sim <= floor {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, bs)) => {
                    sim > bs
                        || (sim == bs
                            && (e.last_used > b.last_used
                                || (e.last_used == b.last_used && e.entry_id < b.entry_id)))
                }
            };
            if better {
                best = Some((e, sim));
            }
        }
        Ok(best.map(|(e, s)| (e.entry_id, s)))
    }

    /// Finds the nearest entry and maps its similarity through `policy`.
    ///
    /// A nonzero depth is a hit and refreshes the entry's recency. The tick
    /// advances whether or not the lookup hits.
    pub fn lookup(
        &mut self,
        query: &Embedding,
        policy: &ReuseDepthPolicy,
        resolution: Option<Resolution>,
    ) -> Result<Lookup> {
        let nearest = self.scan(query, resolution, policy.hit_floor())?;
        let now = self.tick;
        self.tick += 1;
        let Some((entry_id, similarity)) = nearest else {
            return Ok(Lookup::Miss);
        };
        let depth = policy.depth_for(similarity);
        if depth == 0 {
            return Ok(Lookup::Miss);
        }
        let slot = self.slot_of[entry_id as usize];
        let entry = &mut self.entries[slot];
        self.recency.remove(&(entry.last_used, entry_id));
        entry.last_used = now;
        self.recency.insert((now, entry_id));
        Ok(Lookup::Hit {
            entry_id,
            similarity,
            depth,
        })
    }

    /// Inserts a new entry, evicting least recently used entries until it fits.
    pub fn insert(&mut self, embedding: Embedding, resolution: Resolution) -> Result<Inserted> {
        self.check_dimension(&embedding)?;
        let size = self.config.entry_bytes(resolution);
        if size > self.config.capacity {
            return Err(Error::EntryTooLarge {
                size,
                capacity: self.config.capacity,
            });
        }
        let mut evicted = Vec::new();
        while self.occupied + size > self.config.capacity {
            let (_, victim) = self
                .recency
                .pop_first()
                .expect("occupied bytes imply a resident entry");
            self.remove_slot(victim);
            evicted.push(victim);
        }

        let entry_id = self.next_id;
        self.next_id += 1;
        let now = self.tick;
        self.tick += 1;
        self.slot_of.push(self.entries.len());
        self.recency.insert((now, entry_id));
        let tail_norms = block_tail_norms(embedding.as_slice());
        self.entries.push(CacheEntry {
            entry_id,
            embedding,
            resolution,
            stored_depths: self.config.stored_depths.clone(),
            byte_size: size,
            last_used: now,
            tail_norms,
        });
        self.occupied += size;
        self.peak_occupied = self.peak_occupied.max(self.occupied);
        Ok(Inserted { entry_id, evicted })
    }

    fn remove_slot(&mut self, entry_id: u64) {
        let slot = std::mem::replace(&mut self.slot_of[entry_id as usize], VACANT);
        debug_assert_ne!(slot, VACANT, "victim is resident");
        let removed = self.entries.swap_remove(slot);
        self.occupied -= removed.byte_size;
        if let Some(moved) = self.entries.get(slot) {
            self.slot_of[moved.entry_id as usize] = slot;
        }
    }
}
