//! On-disk formats: the sample database (CSV) and mined regions (JSON).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::grid::Axes;
use crate::miner::{MinedRegion, MissingPolicy, Region};
use crate::sampler::{PerformanceDatabase, PointRecord};
use crate::simgen::PointConfig;
use crate::stats::clamp_sample;
use crate::{Error, Result};

/// One sample block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SampleRow {
    s1_db: f64,
    s2_db: f64,
    sample_idx: usize,
    bits: u64,
    errors: u64,
    mirrored: u8,
}

/// Writes one row per sample, points in grid order. Stop reasons are not
/// stored.
pub fn write_database(db: &PerformanceDatabase, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in db.records().values() {
        for (k, s) in rec.samples.iter().enumerate() {
            w.serialize(SampleRow {
                s1_db: rec.point.s1_db,
                s2_db: rec.point.s2_db,
                sample_idx: k,
                bits: s.bits(),
                errors: s.errors(),
                mirrored: u8::from(rec.mirrored),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a database; the axes are the sorted distinct coordinates present.
pub fn read_database(input: impl Read) -> Result<PerformanceDatabase> {
    let mut r = csv::Reader::from_reader(input);
    let mut points: BTreeMap<(u64, u64), (PointConfig, bool, BTreeMap<usize, (u64, u64)>)> =
        BTreeMap::new();
    for (line, row) in r.deserialize::<SampleRow>().enumerate() {
        let row = row?;
        let at = || format!("data row {}", line + 1);
        if !(row.s1_db.is_finite() && row.s2_db.is_finite()) {
            return Err(Error::Format(format!("{}: non-finite coordinate", at())));
        }
        if row.mirrored > 1 {
            return Err(Error::Format(format!("{}: mirrored must be 0 or 1", at())));
        }
        let key = (row.s1_db.to_bits(), row.s2_db.to_bits());
        let entry = points.entry(key).or_insert_with(|| {
            (PointConfig::new(row.s1_db, row.s2_db), row.mirrored == 1, BTreeMap::new())
        });
        if entry.1 != (row.mirrored == 1) {
            return Err(Error::Format(format!("{}: inconsistent mirrored flag", at())));
        }
        if entry.2.insert(row.sample_idx, (row.errors, row.bits)).is_some() {
            return Err(Error::Format(format!(
                "{}: duplicate sample {} at ({}, {})",
                at(),
                row.sample_idx,
                row.s1_db,
                row.s2_db
            )));
        }
    }
    if points.is_empty() {
        return Err(Error::Format("database file has no samples".into()));
    }

    let axis = |pick: fn(&PointConfig) -> f64| {
        let mut v: Vec<f64> = points.values().map(|p| pick(&p.0)).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let axes = Axes::new(axis(|p| p.s1_db), axis(|p| p.s2_db));
    let mut db = PerformanceDatabase::new(axes.clone());
    for (point, mirrored, samples) in points.into_values() {
        if samples.keys().copied().ne(0..samples.len()) {
            return Err(Error::Format(format!(
                "sample indices at ({}, {}) are not 0..{}",
                point.s1_db,
                point.s2_db,
                samples.len()
            )));
        }
        let samples = samples
            .into_values()
            .map(|(e, b)| clamp_sample(e, b).map_err(|err| Error::Format(err.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let ix = axes.x.iter().position(|v| *v == point.s1_db).expect("axis built from points");
        let iy = axes.y.iter().position(|v| *v == point.s2_db).expect("axis built from points");
        db.insert(ix, iy, PointRecord::new(point, samples, None, mirrored));
    }
    Ok(db)
}

/// Which region search produced a [`RegionFile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Gain,
    Support,
    Confidence,
}

/// A region column in axis coordinates: the `x` value and the `s..=t` range
/// of `y` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionColumn {
    pub x: f64,
    pub s: f64,
    pub t: f64,
}

pub const TIE_BREAK: &str = "larger-support-then-lexicographic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFile {
    pub objective: Objective,
    pub tau_final: Option<f64>,
    pub theta: Option<f64>,
    #[serde(rename = "T")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_support: Option<usize>,
    pub support: u64,
    pub hit: u64,
    /// `hit / support`; null for the empty region.
    pub confidence: Option<f64>,
    pub columns: Vec<RegionColumn>,
    pub missing_policy: MissingPolicy,
    pub tie_break: String,
}

impl RegionFile {
    pub fn new(
        objective: Objective,
        threshold: f64,
        mined: Option<&MinedRegion>,
        axes: &Axes,
        missing_policy: MissingPolicy,
    ) -> Self {
        let columns = mined
            .map(|m| {
                m.region
                    .columns()
                    .map(|(x, s, t)| RegionColumn {
                        x: axes.x[x],
                        s: axes.y[s],
                        t: axes.y[t],
                    })
                    .collect()
            })
            .unwrap_or_default();
        RegionFile {
            objective,
            tau_final: mined.map(|m| m.tau),
            theta: None,
            threshold,
            min_support: None,
            support: mined.map_or(0, |m| m.stats.support),
            hit: mined.map_or(0, |m| m.stats.hit),
            confidence: mined.and_then(|m| m.stats.confidence()),
            columns,
            missing_policy,
            tie_break: TIE_BREAK.into(),
        }
    }

    /// The region in cell indices of `axes`.
    pub fn region(&self, axes: &Axes) -> Result<Region> {
        let find = |values: &[f64], v: f64, what: &str| {
            values
                .iter()
                .position(|a| (a - v).abs() <= 1e-9)
                .ok_or_else(|| Error::Format(format!("{what} {v} is not on the database grid")))
        };
        let mut left = None;
        let mut intervals = Vec::with_capacity(self.columns.len());
        for (i, c) in self.columns.iter().enumerate() {
            let x = find(&axes.x, c.x, "column")?;
            let l = *left.get_or_insert(x);
            if x != l + i {
                return Err(Error::Format("region columns are not consecutive".into()));
            }
            intervals.push((find(&axes.y, c.s, "row")?, find(&axes.y, c.t, "row")?));
        }
        Ok(Region::new(left.unwrap_or(0), intervals))
    }
}
