//! Surface fitting, one-dimensional slices, empirical CDFs and
//! cross-validation of mined regions.

use std::collections::BTreeSet;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bucketing::{confidence_map, BucketGrid, HitGrid};
use crate::miner::{optimize_support, MinedRegion, Region};
use crate::sampler::{PerformanceDatabase, PointRecord};
use crate::simgen::{effective_snr, imbalance_factor, point_from_alpha_snr};
use crate::{Error, Result};

/// Neighborhood fraction used for the published surfaces.
pub const DEFAULT_SPAN: f64 = 0.05;

/// Smallest neighborhood that determines a plane.
const MIN_NEIGHBORS: usize = 3;

/// Training observation `z` at `(s1, s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub s1: f64,
    pub s2: f64,
    pub z: f64,
}

/// Value of the fitted surface at one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// The neighborhood did not determine a plane and the weighted mean was
    /// returned instead.
    pub degenerate: bool,
}

/// Tricube-weighted local linear regression over scattered points.
///
/// Each query takes the `q = max(3, ceil(span·n))` nearest training points
/// (Euclidean distance), bandwidth equal to the `q`-th distance, weights
/// `(1 - (d/h)^3)^3`, and evaluates the weighted least-squares plane at the
/// query. When ties at the bandwidth leave fewer than three usable points,
/// the bandwidth grows to the next distinct distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSurface {
    points: Vec<SurfacePoint>,
    span: f64,
    bounds: [f64; 4],
}

pub fn loess_fit(points: Vec<SurfacePoint>, span: f64) -> Result<FittedSurface> {
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::invalid(format!("span must lie in (0, 1], got {span}")));
    }
    if points.len() < MIN_NEIGHBORS {
        return Err(Error::InsufficientData(format!(
            "surface fit needs at least {MIN_NEIGHBORS} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.s1.is_finite() && p.s2.is_finite() && p.z.is_finite())) {
        return Err(Error::invalid("training points must be finite"));
    }
    let weights = vec![1.0; points.len()];
    if spread_is_degenerate(&points, &weights, points[0].s1, points[0].s2) {
        return Err(Error::InsufficientData("training points are collinear".into()));
    }
    let mut bounds = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in &points {
        bounds[0] = bounds[0].min(p.s1);
        bounds[1] = bounds[1].max(p.s1);
        bounds[2] = bounds[2].min(p.s2);
        bounds[3] = bounds[3].max(p.s2);
    }
    Ok(FittedSurface {
        points,
        span,
        bounds,
    })
}

/// Fits `log10` of the point mean BER over every estimable cell.
pub fn fit_database(db: &PerformanceDatabase, span: f64) -> Result<FittedSurface> {
    let points = db
        .records()
        .values()
        .filter_map(|r| {
            r.estimate().map(|e| SurfacePoint {
                s1: r.point.s1_db,
                s2: r.point.s2_db,
                z: e.mean.log10(),
            })
        })
        .collect();
    loess_fit(points, span)
}

/// True when the weighted positions around `(x0, y0)` are collinear.
fn spread_is_degenerate(points: &[SurfacePoint], weights: &[f64], x0: f64, y0: f64) -> bool {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        sw += w;
        sx += w * (p.s1 - x0);
        sy += w * (p.s2 - y0);
    }
    if !(sw > 0.0) {
        return true;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let (dx, dy) = (p.s1 - x0 - mx, p.s2 - y0 - my);
        cxx += w * dx * dx;
        cyy += w * dy * dy;
        cxy += w * dx * dy;
    }
    let trace = cxx + cyy;
    !(trace > 0.0) || cxx * cyy - cxy * cxy <= 1e-10 * trace * trace
}

impl FittedSurface {
    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn points(&self) -> &[SurfacePoint] {
        &self.points
    }

    /// Neighborhood size `max(3, ceil(span·n))`, capped at `n`.
    pub fn neighbors(&self) -> usize {
        let n = self.points.len();
        ((self.span * n as f64).ceil() as usize).max(MIN_NEIGHBORS).min(n)
    }

    /// Whether the query lies in the bounding box of the training points.
    pub fn covers(&self, s1: f64, s2: f64) -> bool {
        let eps = 1e-9;
        let [x0, x1, y0, y1] = self.bounds;
        s1 >= x0 - eps && s1 <= x1 + eps && s2 >= y0 - eps && s2 <= y1 + eps
    }

    /// `None` outside the training area.
    pub fn predict(&self, s1: f64, s2: f64) -> Option<Prediction> {
        if !self.covers(s1, s2) {
            return None;
        }
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.s1 - s1).hypot(p.s2 - s2), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut k = self.neighbors();
        loop {
            let h = dist[k - 1].0;
            let near: Vec<SurfacePoint> = dist.iter().take_while(|d| d.0 < h).map(|d| self.points[d.1]).collect();
            let weights: Vec<f64> = dist
                .iter()
                .take(near.len())
                .map(|d| {
                    let u = d.0 / h;
                    (1.0 - u * u * u).powi(3)
                })
                .collect();
            if near.len() >= MIN_NEIGHBORS && !spread_is_degenerate(&near, &weights, s1, s2) {
                if let Some(v) = local_plane(&near, &weights, s1, s2) {
                    return Some(Prediction {
                        value: v,
                        degenerate: false,
                    });
                }
            }
            // Grow to the next distinct distance, if any.
            match dist.iter().position(|d| d.0 > h) {
                Some(next) => k = next + 1,
                None => {
                    let near: Vec<SurfacePoint> = dist.iter().map(|d| self.points[d.1]).collect();
                    let weights: Vec<f64> = near.iter().map(|_| 1.0).collect();
                    return Some(weighted_mean(&near, &weights));
                }
            }
        }
    }

    pub fn value(&self, s1: f64, s2: f64) -> Option<f64> {
        self.predict(s1, s2).map(|p| p.value)
    }
}

fn weighted_mean(points: &[SurfacePoint], weights: &[f64]) -> Prediction {
    let sw: f64 = weights.iter().sum();
    let value = points.iter().zip(weights).map(|(p, w)| w * p.z).sum::<f64>() / sw;
    Prediction {
        value,
        degenerate: true,
    }
}

/// Intercept of the weighted least-squares plane in coordinates centered at
/// the query.
fn local_plane(points: &[SurfacePoint], weights: &[f64], x0: f64, y0: f64) -> Option<f64> {
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for (p, &w) in points.iter().zip(weights) {
        let row = Vector3::new(1.0, p.s1 - x0, p.s2 - y0);
        a += w * row * row.transpose();
        b += w * p.z * row;
    }
    let coef = a.cholesky()?.solve(&b);
    coef[0].is_finite().then_some(coef[0])
}

/// One sample along a slice; `value` is `None` where the surface is
/// undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    pub alpha: f64,
    pub snr_db: f64,
    pub s1_db: f64,
    pub s2_db: f64,
    pub value: Option<f64>,
}

fn slice_point(surface: &FittedSurface, alpha: f64, snr_db: f64) -> Result<SlicePoint> {
    let p = point_from_alpha_snr(alpha, snr_db)?;
    Ok(SlicePoint {
        alpha,
        snr_db,
        s1_db: p.s1_db,
        s2_db: p.s2_db,
        value: surface.value(p.s1_db, p.s2_db),
    })
}

/// The surface at fixed imbalance factor over a range of effective SNRs.
pub fn slice_fixed_alpha(surface: &FittedSurface, alpha: f64, snr_db: &[f64]) -> Result<Vec<SlicePoint>> {
    snr_db.iter().map(|&s| slice_point(surface, alpha, s)).collect()
}

/// The surface at fixed effective SNR over a range of imbalance factors.
pub fn slice_fixed_snr(surface: &FittedSurface, snr_db: f64, alphas: &[f64]) -> Result<Vec<SlicePoint>> {
    alphas.iter().map(|&a| slice_point(surface, a, snr_db)).collect()
}

/// Slice coordinates of a configuration.
pub fn alpha_snr(s1_db: f64, s2_db: f64) -> (f64, f64) {
    let p = crate::simgen::PointConfig::new(s1_db, s2_db);
    (imbalance_factor(p), effective_snr(p))
}

/// Right-continuous empirical CDF as `(value, fraction)` steps; tied
/// values share one step.
pub fn ecdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empirical CDF of no samples".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("samples must not be NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => steps.push((*v, frac)),
        }
    }
    Ok(steps)
}

/// Smallest step value whose cumulative fraction reaches `p`.
pub fn ecdf_quantile(steps: &[(f64, f64)], p: f64) -> Option<f64> {
    if !(0.0..=1.0).contains(&p) {
        return None;
    }
    steps.iter().find(|s| s.1 >= p - 1e-12).map(|s| s.0)
}

/// Bucket-set Jaccard index; two empty regions agree perfectly.
pub fn jaccard(a: &Region, b: &Region) -> f64 {
    jaccard_where(a, b, |_, _| true)
}

/// Jaccard index restricted to the buckets for which `keep` holds.
pub fn jaccard_where(a: &Region, b: &Region, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let sa: BTreeSet<(usize, usize)> = a.cells().filter(|&(x, y)| keep(x, y)).collect();
    let sb: BTreeSet<(usize, usize)> = b.cells().filter(|&(x, y)| keep(x, y)).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Outcome of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// Sample index left out at every point.
    pub dropped_index: usize,
    pub hits: HitGrid,
    /// `None` when no region reaches the confidence target.
    pub mined: Option<MinedRegion>,
}

impl FoldResult {
    pub fn region(&self) -> Region {
        self.mined.as_ref().map(|m| m.region.clone()).unwrap_or_default()
    }

    pub fn support(&self) -> u64 {
        self.mined.as_ref().map_or(0, |m| m.stats.support)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    /// `(i, j, J)` for every fold pair `i < j`.
    pub jaccard: Vec<(usize, usize, f64)>,
    /// Cells left out of every fold for lack of samples.
    pub excluded: Vec<(usize, usize)>,
}

impl CrossValReport {
    pub fn supports(&self) -> Vec<u64> {
        self.folds.iter().map(FoldResult::support).collect()
    }

    pub fn min_jaccard(&self) -> f64 {
        self.jaccard.iter().map(|j| j.2).fold(1.0, f64::min)
    }
}

/// Leave-one-sample-index-out cross-validation of the optimized-support
/// region at `theta`.
///
/// Fold `j` drops sample `j` at every point. Points with fewer than `folds`
/// samples, or fewer than two remaining after the drop, are excluded from
/// all folds; their buckets become missing and are never covered. Mirrored
/// cells carry their original's samples and so drop the same sample.
pub fn cross_validate(
    db: &PerformanceDatabase,
    folds: usize,
    threshold: f64,
    theta: f64,
) -> Result<CrossValReport> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if db.is_empty() {
        return Err(Error::InsufficientData("empty performance database".into()));
    }
    let excluded: Vec<(usize, usize)> = db
        .records()
        .iter()
        .filter(|(_, r)| r.n() < folds.max(3))
        .map(|(&k, _)| k)
        .collect();
    if !excluded.is_empty() {
        warn!(
            "{} of {} points have too few samples for {folds}-fold cross-validation",
            excluded.len(),
            db.records().len()
        );
    }
    let buckets = BucketGrid::identity(db.axes());
    let results: Vec<FoldResult> = (0..folds)
        .into_par_iter()
        .map(|j| {
            let mut fold_db = PerformanceDatabase::new(db.axes().clone());
            for (&(ix, iy), rec) in db.records() {
                if excluded.contains(&(ix, iy)) {
                    continue;
                }
                let samples = rec
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, s)| *s)
                    .collect();
                fold_db.insert(ix, iy, PointRecord { samples, ..rec.clone() });
            }
            let hits = confidence_map(&fold_db, &buckets, threshold)?.hits;
            let mined = optimize_support(&hits, theta)?;
            Ok(FoldResult {
                dropped_index: j,
                hits,
                mined,
            })
        })
        .collect::<Result<_>>()?;

    let mut jaccard_pairs = Vec::new();
    for i in 0..folds {
        for j in i + 1..folds {
            jaccard_pairs.push((i, j, jaccard(&results[i].region(), &results[j].region())));
        }
    }
    Ok(CrossValReport {
        folds: results,
        jaccard: jaccard_pairs,
        excluded,
    })
}
