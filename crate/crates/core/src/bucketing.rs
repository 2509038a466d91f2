//! Aggregation of points into buckets, bucket confidences and hits.
//!
//! A bucket mixes its member points with prior weights `p_k`:
//! `B̂ = Σ p_k·b̂_k` and `Σ̂² = Σ p_k²·σ̂_k²`, with `N = Σ n_k` samples behind
//! it. With priors estimated from sample counts, `B̂` is exactly the grand
//! mean of the member observations; `Σ̂²` is not their pooled variance.

use serde::{Deserialize, Serialize};

use crate::grid::{Axes, Grid};
use crate::sampler::PerformanceDatabase;
use crate::stats::{t_confidence, PointEstimate};
use crate::{Error, Result};

/// Default discretization: hits range over `0..=1000`.
pub const DEFAULT_SCALE: u32 = 1000;

/// The map from bucket coordinates to member cells of the database grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketGrid {
    members: Grid<Vec<(usize, usize)>>,
}

impl BucketGrid {
    /// One bucket per database cell.
    pub fn identity(axes: &Axes) -> Self {
        BucketGrid {
            members: Grid::from_fn(axes.nx(), axes.ny(), |x, y| vec![(x, y)]),
        }
    }

    /// Buckets of `bx × by` adjacent cells; edge buckets may be smaller.
    pub fn blocks(axes: &Axes, bx: usize, by: usize) -> Result<Self> {
        if bx == 0 || by == 0 {
            return Err(Error::invalid("bucket block sizes must be positive"));
        }
        let (nx, ny) = (axes.nx(), axes.ny());
        let members = Grid::from_fn(nx.div_ceil(bx), ny.div_ceil(by), |x, y| {
            let mut cells = Vec::new();
            for cx in x * bx..((x + 1) * bx).min(nx) {
                for cy in y * by..((y + 1) * by).min(ny) {
                    cells.push((cx, cy));
                }
            }
            cells
        });
        Ok(BucketGrid { members })
    }

    pub fn mx(&self) -> usize {
        self.members.nx()
    }

    pub fn my(&self) -> usize {
        self.members.ny()
    }

    /// Number of buckets `M = M_X · M_Y`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Linear bucket index of bucket `(x, y)`.
    pub fn index(&self, x: usize, y: usize) -> usize {
        x * self.my() + y
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k / self.my(), k % self.my())
    }

    pub fn members(&self, x: usize, y: usize) -> &[(usize, usize)] {
        self.members.get(x, y)
    }
}

/// Mixture statistics of one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n_total: usize,
    pub priors: Vec<f64>,
}

/// Priors proportional to sample counts, `p_k = n_k / Σ n_i`.
pub fn estimate_priors(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::MissingBucket("bucket has no member points".into()));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("member points need at least one sample"));
    }
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&n| n as f64 / total as f64).collect())
}

pub fn bucket_estimate(points: &[PointEstimate], priors: &[f64]) -> Result<BucketEstimate> {
    if points.len() != priors.len() {
        return Err(Error::invalid(format!(
            "{} points but {} priors",
            points.len(),
            priors.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::MissingBucket("bucket has no member points".into()));
    }
    if priors.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("priors must be non-negative"));
    }
    let mean = points.iter().zip(priors).map(|(e, p)| p * e.mean).sum();
    let variance = points
        .iter()
        .zip(priors)
        .map(|(e, p)| p * p * e.variance)
        .sum();
    Ok(BucketEstimate {
        mean,
        variance,
        n_total: points.iter().map(|e| e.n).sum(),
        priors: priors.to_vec(),
    })
}

/// `P(E[B] < T) ≈ F_{N-1}((T - B̂) / (Σ̂ / sqrt(N)))`.
pub fn bucket_confidence(est: &BucketEstimate, threshold: f64) -> Result<f64> {
    t_confidence(est.mean, est.variance, est.n_total, threshold)
}

/// `floor(1000·P + 0.5)`.
pub fn hit(confidence: f64) -> u32 {
    hit_scaled(confidence, DEFAULT_SCALE)
}

pub fn hit_scaled(confidence: f64, scale: u32) -> u32 {
    let c = confidence.clamp(0.0, 1.0);
    ((scale as f64 * c + 0.5).floor() as u32).min(scale)
}

/// Bucket hits with a constant per-bucket support of `scale`. Buckets
/// without data are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitGrid {
    pub hits: Grid<Option<u32>>,
    pub scale: u32,
}

impl HitGrid {
    pub fn new(hits: Grid<Option<u32>>, scale: u32) -> Self {
        HitGrid { hits, scale }
    }

    /// A fully populated grid from rows of hits indexed `[x][y]`.
    pub fn from_columns(columns: &[Vec<u32>]) -> Self {
        let nx = columns.len();
        let ny = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == ny), "ragged hit columns");
        HitGrid {
            hits: Grid::from_fn(nx, ny, |x, y| Some(columns[x][y])),
            scale: DEFAULT_SCALE,
        }
    }

    pub fn mx(&self) -> usize {
        self.hits.nx()
    }

    pub fn my(&self) -> usize {
        self.hits.ny()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        *self.hits.get(x, y)
    }

    pub fn missing_count(&self) -> usize {
        self.hits.iter().filter(|(_, _, h)| h.is_none()).count()
    }

    /// Missing buckets replaced by hit 0.
    pub fn zero_filled(&self) -> HitGrid {
        HitGrid {
            hits: self.hits.map(|h| Some(h.unwrap_or(0))),
            scale: self.scale,
        }
    }

    pub fn transpose(&self) -> HitGrid {
        HitGrid {
            hits: self.hits.transpose(),
            scale: self.scale,
        }
    }
}

/// Where bucket mixture weights come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Priors {
    /// Proportional to the member sample counts.
    #[default]
    SampleCounts,
    /// Fixed per-cell weights over the database grid, renormalized within
    /// each bucket.
    Weights(Grid<f64>),
}

/// Raw bucket confidences alongside their discretized hits.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub probability: Grid<Option<f64>>,
    pub hits: HitGrid,
}

pub fn confidence_map(
    db: &PerformanceDatabase,
    buckets: &BucketGrid,
    threshold: f64,
) -> Result<ConfidenceMap> {
    confidence_map_with(db, buckets, threshold, &Priors::SampleCounts, DEFAULT_SCALE)
}

/// Per-bucket confidence and hit. Member points with fewer than two samples
/// are ignored; a bucket with no usable member is masked.
pub fn confidence_map_with(
    db: &PerformanceDatabase,
    buckets: &BucketGrid,
    threshold: f64,
    priors: &Priors,
    scale: u32,
) -> Result<ConfidenceMap> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!(
            "performance threshold must be positive, got {threshold}"
        )));
    }
    if scale == 0 {
        return Err(Error::invalid("hit scale must be positive"));
    }
    let (mx, my) = (buckets.mx(), buckets.my());
    let mut probability = Grid::filled(mx, my, None);
    let mut hits = Grid::filled(mx, my, None);
    for x in 0..mx {
        for y in 0..my {
            let mut ests = Vec::new();
            let mut weights = Vec::new();
            for &(cx, cy) in buckets.members(x, y) {
                let Some(est) = db.get(cx, cy).and_then(|r| r.estimate()) else {
                    continue;
                };
                let w = match priors {
                    Priors::SampleCounts => est.n as f64,
                    Priors::Weights(g) => *g.get(cx, cy),
                };
                ests.push(est);
                weights.push(w);
            }
            let total: f64 = weights.iter().sum();
            if ests.is_empty() || !(total > 0.0) {
                continue;
            }
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let est = bucket_estimate(&ests, &p)?;
            let conf = bucket_confidence(&est, threshold)?;
            probability.set(x, y, Some(conf));
            hits.set(x, y, Some(hit_scaled(conf, scale)));
        }
    }
    Ok(ConfidenceMap {
        probability,
        hits: HitGrid::new(hits, scale),
    })
}
