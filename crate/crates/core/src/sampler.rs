//! Adaptive per-point sampling and full-grid sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Axes, Grid};
use crate::simgen::{BlockSimulator, PointConfig};
use crate::stats::{
    point_estimate, rule_relative_accuracy, rule_threshold, BerSample, PointEstimate,
    StoppingConfig,
};
use crate::Result;

/// Which stopping rule ended sampling at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    RelativeAccuracy,
    Threshold,
    SampleCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: PointConfig,
    pub samples: Vec<BerSample>,
    /// Unknown for records loaded from disk.
    pub stop_reason: Option<StopReason>,
    /// Copied from the record across the diagonal rather than simulated.
    pub mirrored: bool,
}

impl PointRecord {
    pub fn new(
        point: PointConfig,
        samples: Vec<BerSample>,
        stop_reason: Option<StopReason>,
        mirrored: bool,
    ) -> Self {
        PointRecord {
            point,
            samples,
            stop_reason,
            mirrored,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// `None` when fewer than two samples are available.
    pub fn estimate(&self) -> Option<PointEstimate> {
        point_estimate(&self.samples).ok()
    }
}

/// Sample records over a grid of configurations, keyed by `(ix, iy)` cell
/// indices into the axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceDatabase {
    axes: Axes,
    records: BTreeMap<(usize, usize), PointRecord>,
}

impl PerformanceDatabase {
    pub fn new(axes: Axes) -> Self {
        PerformanceDatabase {
            axes,
            records: BTreeMap::new(),
        }
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn records(&self) -> &BTreeMap<(usize, usize), PointRecord> {
        &self.records
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<&PointRecord> {
        self.records.get(&(ix, iy))
    }

    /// Replaces whatever was stored at the cell.
    pub fn insert(&mut self, ix: usize, iy: usize, record: PointRecord) {
        assert!(
            ix < self.axes.nx() && iy < self.axes.ny(),
            "cell ({ix}, {iy}) outside the grid"
        );
        self.records.insert((ix, iy), record);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn simulated_points(&self) -> usize {
        self.records.values().filter(|r| !r.mirrored).count()
    }

    /// Samples actually simulated (mirrored copies excluded).
    pub fn simulated_samples(&self) -> usize {
        self.records
            .values()
            .filter(|r| !r.mirrored)
            .map(PointRecord::n)
            .sum()
    }

    /// Drops the stop reasons, which the CSV format does not carry.
    pub fn without_stop_reasons(mut self) -> Self {
        for r in self.records.values_mut() {
            r.stop_reason = None;
        }
        self
    }
}

/// Draws blocks at `point` until a stopping rule fires.
///
/// The rules are checked after every block once two samples exist; sampling
/// may only stop after `cfg.min_samples` blocks and always stops at
/// `cfg.max_samples`. When both rules hold, relative accuracy is reported.
pub fn sample_point(
    point: PointConfig,
    cfg: &StoppingConfig,
    sim: &dyn BlockSimulator,
) -> Result<PointRecord> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.min_samples);
    loop {
        samples.push(sim.simulate(point, samples.len() as u64)?);
        let n = samples.len();
        if n >= cfg.min_samples {
            if let Some(reason) = rule_fired(&samples, cfg) {
                return Ok(PointRecord::new(point, samples, Some(reason), false));
            }
        }
        if n >= cfg.max_samples {
            return Ok(PointRecord::new(
                point,
                samples,
                Some(StopReason::SampleCap),
                false,
            ));
        }
    }
}

/// The stopping rule satisfied by `samples`, if any.
pub fn rule_fired(samples: &[BerSample], cfg: &StoppingConfig) -> Option<StopReason> {
    let est = point_estimate(samples).ok()?;
    if rule_relative_accuracy(&est, cfg) {
        Some(StopReason::RelativeAccuracy)
    } else if rule_threshold(&est, cfg) {
        Some(StopReason::Threshold)
    } else {
        None
    }
}

/// Samples every cell of the grid whose mirror across the diagonal is not
/// an earlier cell (`s1 <= s2`), and copies the rest from their mirrors.
///
/// Points are processed in parallel; the result depends only on the
/// simulator's seeding, never on scheduling.
pub fn sweep(
    axes: &Axes,
    cfg: &StoppingConfig,
    sim: &dyn BlockSimulator,
) -> Result<PerformanceDatabase> {
    cfg.validate()?;
    let mut direct = Vec::new();
    let mut mirrored = Vec::new();
    for ix in 0..axes.nx() {
        for iy in 0..axes.ny() {
            let (s1, s2) = (axes.x[ix], axes.y[iy]);
            match axes.mirror_of(ix, iy) {
                Some(m) if s1 > s2 => mirrored.push(((ix, iy), m)),
                _ => direct.push((ix, iy)),
            }
        }
    }

    let sampled: Vec<((usize, usize), PointRecord)> = direct
        .par_iter()
        .map(|&(ix, iy)| {
            let p = PointConfig::new(axes.x[ix], axes.y[iy]);
            sample_point(p, cfg, sim).map(|r| ((ix, iy), r))
        })
        .collect::<Result<_>>()?;

    let mut db = PerformanceDatabase::new(axes.clone());
    for ((ix, iy), rec) in sampled {
        db.insert(ix, iy, rec);
    }
    for ((ix, iy), (mx, my)) in mirrored {
        let source = db
            .get(mx, my)
            .expect("mirror source is always sampled directly")
            .clone();
        let copy = PointRecord {
            point: source.point.mirrored(),
            mirrored: true,
            ..source
        };
        db.insert(ix, iy, copy);
    }
    Ok(db)
}

/// Sample-size and relative-spread maps aligned with the database grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub sample_size: Grid<Option<usize>>,
    /// Sample standard deviation over sample mean; `None` below 2 samples.
    pub sd_over_mean: Grid<Option<f64>>,
}

pub fn diagnostics(db: &PerformanceDatabase) -> Diagnostics {
    let (nx, ny) = (db.axes().nx(), db.axes().ny());
    let sample_size = Grid::from_fn(nx, ny, |x, y| db.get(x, y).map(PointRecord::n));
    let sd_over_mean = Grid::from_fn(nx, ny, |x, y| {
        db.get(x, y)
            .and_then(PointRecord::estimate)
            .map(|e| e.sd() / e.mean)
    });
    Diagnostics {
        sample_size,
        sd_over_mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Synthetic;
    use crate::stats::clamp_sample;

    /// Replays a fixed list of error counts.
    struct Scripted(Vec<u64>);

    impl BlockSimulator for Scripted {
        fn simulate(&self, _: PointConfig, j: u64) -> Result<BerSample> {
            clamp_sample(self.0[j as usize % self.0.len()], 800_000)
        }
    }

    struct Failing;

    impl BlockSimulator for Failing {
        fn simulate(&self, _: PointConfig, _: u64) -> Result<BerSample> {
            Err(crate::Error::Simulation("boom".into()))
        }
    }

    #[test]
    fn zero_error_blocks_stop_on_relative_accuracy() {
        let rec = sample_point(
            PointConfig::new(30.0, 30.0),
            &StoppingConfig::default(),
            &Scripted(vec![0, 2]),
        )
        .unwrap();
        assert_eq!(rec.n(), 2);
        assert_eq!(rec.stop_reason, Some(StopReason::RelativeAccuracy));
        let est = rec.estimate().unwrap();
        assert_eq!((est.mean, est.variance), (3.75e-6, 0.0));
    }

    #[test]
    fn noise_free_low_bep_point_stops_at_two() {
        let sim = Synthetic::new(0.0, 800_000, 3).unwrap();
        let cfg = StoppingConfig::default();
        let rec = sample_point(PointConfig::new(20.0, 22.0), &cfg, &sim).unwrap();
        assert_eq!(rec.n(), 2);
        // Zero variance satisfies both rules; relative accuracy takes priority.
        let est = rec.estimate().unwrap();
        assert!(rule_threshold(&est, &cfg));
        assert_eq!(rec.stop_reason, Some(StopReason::RelativeAccuracy));
    }

    #[test]
    fn threshold_rule_fires_when_relative_accuracy_cannot() {
        // Values 4e-6 and 2.4e-5 around a mean far below t = 1e-4.
        let rec = sample_point(
            PointConfig::new(0.0, 0.0),
            &StoppingConfig::default(),
            &Scripted(vec![3, 19]),
        )
        .unwrap();
        assert_eq!(rec.n(), 2);
        assert_eq!(rec.stop_reason, Some(StopReason::Threshold));
    }

    #[test]
    fn noisy_boundary_point_hits_the_cap() {
        let sim = Synthetic::new(2.0, 800_000, 11).unwrap();
        let rec = sample_point(PointConfig::new(8.0, 8.0), &StoppingConfig::default(), &sim)
            .unwrap();
        assert_eq!(rec.n(), 50);
        assert_eq!(rec.stop_reason, Some(StopReason::SampleCap));
    }

    #[test]
    fn min_samples_defers_stopping() {
        let cfg = StoppingConfig {
            min_samples: 3,
            ..Default::default()
        };
        let rec = sample_point(PointConfig::new(0.0, 0.0), &cfg, &Scripted(vec![0])).unwrap();
        assert_eq!(rec.n(), 3);
    }

    #[test]
    fn simulator_failure_propagates() {
        let err = sample_point(PointConfig::new(0.0, 0.0), &StoppingConfig::default(), &Failing);
        assert!(matches!(err, Err(crate::Error::Simulation(_))));
    }

    #[test]
    fn two_by_two_sweep_mirrors_one_cell() {
        let axes = Axes::new(vec![5.0, 9.0], vec![5.0, 9.0]);
        let sim = Synthetic::new(0.3, 800_000, 1).unwrap();
        let db = sweep(&axes, &StoppingConfig::default(), &sim).unwrap();
        assert_eq!(db.records().len(), 4);
        assert_eq!(db.simulated_points(), 3);
        let copy = db.get(1, 0).unwrap();
        let original = db.get(0, 1).unwrap();
        assert!(copy.mirrored && !original.mirrored);
        assert_eq!(copy.samples, original.samples);
        assert_eq!(copy.point, PointConfig::new(9.0, 5.0));
    }

    #[test]
    fn diagnostics_on_noise_free_surface() {
        let axes = Axes::square(3, 12, 1);
        let sim = Synthetic::new(0.0, 800_000, 1).unwrap();
        let db = sweep(&axes, &StoppingConfig::default(), &sim).unwrap();
        let d = diagnostics(&db);
        assert!(d.sample_size.iter().all(|(_, _, n)| *n == Some(2)));
        assert!(d.sd_over_mean.iter().all(|(_, _, r)| *r == Some(0.0)));
    }
}
