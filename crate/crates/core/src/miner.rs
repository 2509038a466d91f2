//! Optimized connected rectilinear regions over a hit grid.
//!
//! A region is stored column by column: starting at column `left`, column
//! `left + i` covers rows `intervals[i].0 ..= intervals[i].1`. It is
//! admissible when its top boundary first rises then falls, its bottom
//! boundary first falls then rises, and consecutive column intervals
//! overlap. Equivalently, every horizontal and vertical line meets it in a
//! connected set and it is 4-connected.
//!
//! [`optimize_gain`] maximizes `G = H - τ·S` exactly by dynamic programming
//! over four boundary phases:
//!
//! | phase | top     | bottom  |
//! |-------|---------|---------|
//! | W     | rising  | falling |
//! | U     | rising  | rising  |
//! | D     | falling | falling |
//! | N     | falling | rising  |
//!
//! with transitions W→{W,U,D,N}, U→{U,N}, D→{D,N}, N→{N}. Running maxima
//! over predecessor intervals keep each column at `O(M_Y²)`.
//!
//! Ties in gain go to the larger support, then to the lexicographically
//! smallest `(left, [(s, t), ...])`. [`optimize_support`] and
//! [`optimize_confidence`] binary-search the slope over optimized-gain
//! regions; like any search restricted to optimized-gain regions they are
//! approximate.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bucketing::{BucketEstimate, HitGrid};
use crate::stats::t_confidence;
use crate::{Error, Result};

/// Column-interval representation of a bucket set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Region {
    left: usize,
    intervals: Vec<(usize, usize)>,
}

impl Region {
    pub fn empty() -> Self {
        Region::default()
    }

    /// Intervals are `(bottom, top)` row pairs, one per column from `left`.
    pub fn new(left: usize, intervals: Vec<(usize, usize)>) -> Self {
        if intervals.is_empty() {
            return Region::empty();
        }
        Region { left, intervals }
    }

    /// The `nx × ny` rectangle.
    pub fn full(nx: usize, ny: usize) -> Self {
        if nx == 0 || ny == 0 {
            return Region::empty();
        }
        Region::new(0, vec![(0, ny - 1); nx])
    }

    /// The region made of `cells`, provided every column is contiguous and
    /// the occupied columns are consecutive.
    pub fn from_cells(cells: &[(usize, usize)]) -> Option<Region> {
        if cells.is_empty() {
            return Some(Region::empty());
        }
        let left = cells.iter().map(|c| c.0).min()?;
        let right = cells.iter().map(|c| c.0).max()?;
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); right - left + 1];
        for &(x, y) in cells {
            cols[x - left].push(y);
        }
        let mut intervals = Vec::with_capacity(cols.len());
        for mut ys in cols {
            if ys.is_empty() {
                return None;
            }
            ys.sort_unstable();
            ys.dedup();
            let (s, t) = (ys[0], ys[ys.len() - 1]);
            if t - s + 1 != ys.len() {
                return None;
            }
            intervals.push((s, t));
        }
        Some(Region::new(left, intervals))
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn left(&self) -> usize {
        self.left
    }

    /// Last column; meaningless for the empty region.
    pub fn right(&self) -> usize {
        self.left + self.intervals.len().saturating_sub(1)
    }

    pub fn intervals(&self) -> &[(usize, usize)] {
        &self.intervals
    }

    /// `(column, bottom, top)` triples.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.intervals
            .iter()
            .enumerate()
            .map(|(i, &(s, t))| (self.left + i, s, t))
    }

    /// Number of buckets `η`, counting well-formed intervals only.
    pub fn bucket_count(&self) -> usize {
        self.intervals
            .iter()
            .map(|&(s, t)| if t >= s { t - s + 1 } else { 0 })
            .sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.columns().flat_map(|(x, s, t)| (s..=t).map(move |y| (x, y)))
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        if self.is_empty() || x < self.left || x > self.right() {
            return false;
        }
        let (s, t) = self.intervals[x - self.left];
        s <= y && y <= t
    }

    /// Reflection across the main diagonal.
    pub fn transpose(&self) -> Region {
        let cells: Vec<(usize, usize)> = self.cells().map(|(x, y)| (y, x)).collect();
        Region::from_cells(&cells).expect("the transpose of an admissible region is admissible")
    }

    fn tie_key(&self) -> (usize, &[(usize, usize)]) {
        (self.left, &self.intervals)
    }
}

/// True iff the region is empty or satisfies every shape invariant.
pub fn is_admissible(region: &Region) -> bool {
    let iv = region.intervals();
    if iv.iter().any(|&(s, t)| s > t) {
        return false;
    }
    let overlapping = iv
        .windows(2)
        .all(|w| w[1].0 <= w[0].1 && w[0].0 <= w[1].1);
    let tops: Vec<usize> = iv.iter().map(|i| i.1).collect();
    let bottoms: Vec<usize> = iv.iter().map(|i| i.0).collect();
    overlapping && rises_then_falls(&tops) && falls_then_rises(&bottoms)
}

fn rises_then_falls(v: &[usize]) -> bool {
    let mut fell = false;
    for w in v.windows(2) {
        match w[1].cmp(&w[0]) {
            Ordering::Less => fell = true,
            Ordering::Greater if fell => return false,
            _ => {}
        }
    }
    true
}

fn falls_then_rises(v: &[usize]) -> bool {
    let mut rose = false;
    for w in v.windows(2) {
        match w[1].cmp(&w[0]) {
            Ordering::Greater => rose = true,
            Ordering::Less if rose => return false,
            _ => {}
        }
    }
    true
}

/// Hit, support and confidence of a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub hit: u64,
    pub support: u64,
    pub buckets: usize,
}

impl RegionStats {
    /// `Θ = H / S`; `None` for the empty region.
    pub fn confidence(&self) -> Option<f64> {
        (self.support > 0).then(|| self.hit as f64 / self.support as f64)
    }

    pub fn gain(&self, tau: f64) -> f64 {
        self.hit as f64 - tau * self.support as f64
    }
}

/// Sums hits over the region. Fails if it leaves the grid or covers a
/// missing bucket.
pub fn region_stats(grid: &HitGrid, region: &Region) -> Result<RegionStats> {
    if !region.is_empty() && (region.right() >= grid.mx()) {
        return Err(Error::invalid("region extends past the last column"));
    }
    let mut hit = 0u64;
    let mut buckets = 0usize;
    for (x, s, t) in region.columns() {
        if s > t || t >= grid.my() {
            return Err(Error::invalid(format!(
                "column {x} interval [{s}, {t}] is outside the grid"
            )));
        }
        for y in s..=t {
            let h = grid
                .get(x, y)
                .ok_or_else(|| Error::invalid(format!("region covers missing bucket ({x}, {y})")))?;
            hit += u64::from(h);
            buckets += 1;
        }
    }
    Ok(RegionStats {
        hit,
        support: u64::from(grid.scale) * buckets as u64,
        buckets,
    })
}

/// `G = H - τ·S`.
pub fn region_gain(grid: &HitGrid, region: &Region, tau: f64) -> Result<f64> {
    Ok(region_stats(grid, region)?.gain(tau))
}

/// A slope held exactly as `num / 2^SHIFT`, so that gains of integer hit
/// sums compare without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slope {
    num: i128,
}

impl Slope {
    const SHIFT: u32 = 80;

    fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("slope must lie in [0, 1], got {tau}")));
        }
        let num = (tau * 2f64.powi(Self::SHIFT as i32)).round() as i128;
        Ok(Slope { num })
    }

    /// `(h - τ·scale) · 2^SHIFT`.
    fn cell_gain(&self, hit: u32, scale: u32) -> i128 {
        (i128::from(hit) << Self::SHIFT) - self.num * i128::from(scale)
    }
}

fn check_grid_size(grid: &HitGrid) -> Result<()> {
    // Keeps every scaled gain well inside i128 and row indices in u16.
    let total = grid.len() as u128 * u128::from(grid.scale);
    if total >= 1 << 40 || grid.my() > u16::MAX as usize {
        return Err(Error::invalid("hit grid too large for exact gain arithmetic"));
    }
    Ok(())
}

const PHASES: usize = 4;
const W: usize = 0;
const U: usize = 1;
const D: usize = 2;
const N: usize = 3;

#[derive(Debug, Clone, Copy)]
struct State {
    gain: i128,
    eta: u32,
    left: u32,
    rank: u32,
}

/// A predecessor candidate from the previous column.
#[derive(Debug, Clone, Copy)]
struct Cand {
    gain: i128,
    eta: u32,
    rank: u32,
    phase: u8,
    s: u16,
    t: u16,
}

impl Cand {
    fn beats(&self, other: &Cand) -> bool {
        match (self.gain, self.eta).cmp(&(other.gain, other.eta)) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.rank < other.rank,
        }
    }
}

fn best(a: Option<Cand>, b: Option<Cand>) -> Option<Cand> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.beats(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

type Pred = Option<(u8, u16, u16)>;

/// Admissible region of maximum gain `H - τ·S`; empty when every
/// non-empty region has negative gain. Missing buckets are never covered.
pub fn optimize_gain(grid: &HitGrid, tau: f64) -> Result<Region> {
    check_grid_size(grid)?;
    let slope = Slope::new(tau)?;
    Ok(GainDp::new(grid, slope).solve())
}

struct GainDp<'a> {
    grid: &'a HitGrid,
    slope: Slope,
    ny: usize,
}

impl<'a> GainDp<'a> {
    fn new(grid: &'a HitGrid, slope: Slope) -> Self {
        GainDp {
            grid,
            slope,
            ny: grid.my(),
        }
    }

    fn idx(&self, phase: usize, s: usize, t: usize) -> usize {
        (phase * self.ny + s) * self.ny + t
    }

    /// Scaled gain of every interval of column `x`; `None` over missing cells.
    fn column_gains(&self, x: usize) -> Vec<Option<i128>> {
        let ny = self.ny;
        let mut out = vec![None; ny * ny];
        for s in 0..ny {
            let mut acc = Some(0i128);
            for t in s..ny {
                acc = match (acc, self.grid.get(x, t)) {
                    (Some(a), Some(h)) => Some(a + self.slope.cell_gain(h, self.grid.scale)),
                    _ => None,
                };
                if acc.is_none() {
                    break;
                }
                out[s * ny + t] = acc;
            }
        }
        out
    }

    fn solve(&self) -> Region {
        let (nx, ny) = (self.grid.mx(), self.ny);
        if nx == 0 || ny == 0 {
            return Region::empty();
        }
        let size = PHASES * ny * ny;
        let mut preds: Vec<Vec<Pred>> = Vec::with_capacity(nx);
        let mut prev: Vec<Option<State>> = vec![None; size];
        // Best state per column, by (gain, eta) then rank.
        let mut finals: Vec<(usize, usize, usize, usize, State)> = Vec::new();

        for m in 0..nx {
            let weights = self.column_gains(m);
            let incoming = if m == 0 {
                [vec![None; ny * ny], vec![None; ny * ny], vec![None; ny * ny], vec![None; ny * ny]]
            } else {
                self.best_predecessors(&prev)
            };
            let mut cur: Vec<Option<State>> = vec![None; size];
            let mut col_preds: Vec<Pred> = vec![None; size];
            for phase in 0..PHASES {
                for s in 0..ny {
                    for t in s..ny {
                        let Some(w) = weights[s * ny + t] else { continue };
                        let eta = (t - s + 1) as u32;
                        let from = incoming[phase][s * ny + t]
                            .filter(|c| (c.gain, c.eta) >= (0, 0));
                        let i = self.idx(phase, s, t);
                        cur[i] = Some(match from {
                            Some(c) => {
                                let p = prev[self.idx(c.phase as usize, c.s as usize, c.t as usize)]
                                    .expect("candidate refers to a live state");
                                col_preds[i] = Some((c.phase, c.s, c.t));
                                State {
                                    gain: c.gain + w,
                                    eta: c.eta + eta,
                                    left: p.left,
                                    rank: 0,
                                }
                            }
                            None => State {
                                gain: w,
                                eta,
                                left: m as u32,
                                rank: 0,
                            },
                        });
                    }
                }
            }
            self.assign_ranks(&mut cur, &col_preds, &prev);

            let mut col_best: Option<(usize, usize, usize, State)> = None;
            for phase in 0..PHASES {
                for s in 0..ny {
                    for t in s..ny {
                        let Some(st) = cur[self.idx(phase, s, t)] else { continue };
                        let better = match &col_best {
                            None => true,
                            Some((_, _, _, b)) => match (st.gain, st.eta).cmp(&(b.gain, b.eta)) {
                                Ordering::Greater => true,
                                Ordering::Less => false,
                                Ordering::Equal => st.rank < b.rank,
                            },
                        };
                        if better {
                            col_best = Some((phase, s, t, st));
                        }
                    }
                }
            }
            if let Some((phase, s, t, st)) = col_best {
                finals.push((m, phase, s, t, st));
            }
            preds.push(col_preds);
            prev = cur;
        }

        let Some(top) = finals.iter().map(|f| (f.4.gain, f.4.eta)).max() else {
            return Region::empty();
        };
        if top < (0, 0) {
            return Region::empty();
        }
        finals
            .iter()
            .filter(|f| (f.4.gain, f.4.eta) == top)
            .map(|&(m, phase, s, t, _)| self.reconstruct(&preds, m, phase, s, t))
            .min_by(|a, b| a.tie_key().cmp(&b.tie_key()))
            .unwrap_or_default()
    }

    /// For each phase and interval of the next column, the best admissible
    /// predecessor state in `prev`.
    fn best_predecessors(&self, prev: &[Option<State>]) -> [Vec<Option<Cand>>; PHASES] {
        let ny = self.ny;
        let at = |phase: usize, s: usize, t: usize| -> Option<Cand> {
            prev[self.idx(phase, s, t)].map(|st| Cand {
                gain: st.gain,
                eta: st.eta,
                rank: st.rank,
                phase: phase as u8,
                s: s as u16,
                t: t as u16,
            })
        };
        // Allowed predecessor phases per target phase.
        let pool = |s: usize, t: usize, from: &[usize]| -> Option<Cand> {
            from.iter().fold(None, |acc, &p| best(acc, at(p, s, t)))
        };
        let mut a_w = vec![None; ny * ny];
        let mut a_u = vec![None; ny * ny];
        let mut a_d = vec![None; ny * ny];
        let mut a_n = vec![None; ny * ny];
        for s in 0..ny {
            for t in s..ny {
                let i = s * ny + t;
                a_w[i] = pool(s, t, &[W]);
                a_u[i] = pool(s, t, &[W, U]);
                a_d[i] = pool(s, t, &[W, D]);
                a_n[i] = pool(s, t, &[W, U, D, N]);
            }
        }

        // W: predecessor nested inside, s <= s' <= t' <= t.
        let mut g_w = vec![None; ny * ny];
        for len in 1..=ny {
            for s in 0..=ny - len {
                let t = s + len - 1;
                let mut v = a_w[s * ny + t];
                if len > 1 {
                    v = best(v, g_w[(s + 1) * ny + t]);
                    v = best(v, g_w[s * ny + t - 1]);
                }
                g_w[s * ny + t] = v;
            }
        }

        // N: predecessor enclosing, s' <= s <= t <= t'.
        let mut g_n = vec![None; ny * ny];
        for len in (1..=ny).rev() {
            for s in 0..=ny - len {
                let t = s + len - 1;
                let mut v = a_n[s * ny + t];
                if s > 0 {
                    v = best(v, g_n[(s - 1) * ny + t]);
                }
                if t + 1 < ny {
                    v = best(v, g_n[s * ny + t + 1]);
                }
                g_n[s * ny + t] = v;
            }
        }

        // U: slanting up, s' <= s <= t' <= t.
        let mut b_u = vec![None; ny * ny];
        for tp in 0..ny {
            let mut run = None;
            for s in 0..=tp {
                run = best(run, a_u[s * ny + tp]);
                b_u[s * ny + tp] = run;
            }
        }
        let mut g_u = vec![None; ny * ny];
        for s in 0..ny {
            let mut run = None;
            for t in s..ny {
                run = best(run, b_u[s * ny + t]);
                g_u[s * ny + t] = run;
            }
        }

        // D: slanting down, s <= s' <= t <= t'.
        let mut c_d = vec![None; ny * ny];
        for sp in 0..ny {
            let mut run = None;
            for t in (sp..ny).rev() {
                run = best(run, a_d[sp * ny + t]);
                c_d[sp * ny + t] = run;
            }
        }
        let mut g_d = vec![None; ny * ny];
        for t in 0..ny {
            let mut run = None;
            for s in (0..=t).rev() {
                run = best(run, c_d[s * ny + t]);
                g_d[s * ny + t] = run;
            }
        }

        [g_w, g_u, g_d, g_n]
    }

    /// Dense ranks of the states of one column by `(left, prefix, s, t)`.
    fn assign_ranks(&self, cur: &mut [Option<State>], preds: &[Pred], prev: &[Option<State>]) {
        let ny = self.ny;
        let mut keyed: Vec<((u32, u32, usize, usize), usize)> = Vec::new();
        for (i, st) in cur.iter().enumerate() {
            let Some(st) = st else { continue };
            let pred_rank = preds[i]
                .map(|(p, s, t)| {
                    prev[self.idx(p as usize, s as usize, t as usize)]
                        .expect("predecessor state exists")
                        .rank
                })
                .unwrap_or(0);
            let s = (i / ny) % ny;
            let t = i % ny;
            keyed.push(((st.left, pred_rank, s, t), i));
        }
        keyed.sort_unstable();
        let mut rank = 0u32;
        for k in 0..keyed.len() {
            if k > 0 && keyed[k].0 != keyed[k - 1].0 {
                rank += 1;
            }
            if let Some(st) = cur[keyed[k].1].as_mut() {
                st.rank = rank;
            }
        }
    }

    fn reconstruct(&self, preds: &[Vec<Pred>], m: usize, phase: usize, s: usize, t: usize) -> Region {
        let mut intervals = VecDeque::new();
        let (mut m, mut phase, mut s, mut t) = (m, phase, s, t);
        loop {
            intervals.push_front((s, t));
            match preds[m][self.idx(phase, s, t)] {
                Some((p, ps, pt)) => {
                    m -= 1;
                    phase = p as usize;
                    s = ps as usize;
                    t = pt as usize;
                }
                None => break,
            }
        }
        Region::new(m, intervals.into())
    }
}

/// Exact gain comparison key of a region: `(H·2^k - τ·S·2^k, η)`.
fn exact_key(grid: &HitGrid, slope: Slope, region: &Region) -> Option<(i128, usize)> {
    let mut gain = 0i128;
    for (x, y) in region.cells() {
        gain += slope.cell_gain(grid.get(x, y)?, grid.scale);
    }
    Some((gain, region.bucket_count()))
}

/// Largest grid [`brute_force_optimize`] accepts.
pub const BRUTE_FORCE_MAX_BUCKETS: usize = 20;

/// Every admissible region of the grid avoiding missing buckets, found by
/// enumerating all bucket subsets and testing the line and connectivity
/// definitions directly.
pub fn enumerate_admissible(grid: &HitGrid) -> Result<Vec<Region>> {
    let (nx, ny) = (grid.mx(), grid.my());
    let m = nx * ny;
    if m > BRUTE_FORCE_MAX_BUCKETS {
        return Err(Error::invalid(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_BUCKETS} buckets, grid has {m}"
        )));
    }
    let mut out = Vec::new();
    let mut cells = Vec::with_capacity(m);
    for mask in 0u64..(1u64 << m) {
        cells.clear();
        for k in 0..m {
            if mask >> k & 1 == 1 {
                cells.push((k / ny, k % ny));
            }
        }
        if cells.iter().any(|&(x, y)| grid.get(x, y).is_none()) {
            continue;
        }
        if cells_admissible(&cells, nx, ny) {
            out.push(Region::from_cells(&cells).expect("admissible cell sets have column intervals"));
        }
    }
    Ok(out)
}

/// Line convexity in both directions plus 4-connectivity.
pub fn cells_admissible(cells: &[(usize, usize)], nx: usize, ny: usize) -> bool {
    if cells.is_empty() {
        return true;
    }
    let mut occupied = vec![false; nx * ny];
    for &(x, y) in cells {
        occupied[x * ny + y] = true;
    }
    let at = |x: usize, y: usize| occupied[x * ny + y];
    let line_connected = |line: &mut dyn Iterator<Item = bool>| {
        // No in-region cell after a gap that follows an in-region run.
        let mut state = 0; // 0 before, 1 inside, 2 after
        for inside in line {
            state = match (state, inside) {
                (0, true) => 1,
                (1, false) => 2,
                (2, true) => return false,
                (s, _) => s,
            };
        }
        true
    };
    for x in 0..nx {
        if !line_connected(&mut (0..ny).map(|y| at(x, y))) {
            return false;
        }
    }
    for y in 0..ny {
        if !line_connected(&mut (0..nx).map(|x| at(x, y))) {
            return false;
        }
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([cells[0]]);
    seen[cells[0].0 * ny + cells[0].1] = true;
    let mut reached = 0;
    while let Some((x, y)) = queue.pop_front() {
        reached += 1;
        let mut visit = |a: usize, b: usize| {
            if at(a, b) && !seen[a * ny + b] {
                seen[a * ny + b] = true;
                queue.push_back((a, b));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < nx {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < ny {
            visit(x, y + 1);
        }
    }
    reached == cells.len()
}

/// Exhaustive optimized-gain region with the same tie-breaking as
/// [`optimize_gain`]. Refuses grids of more than 20 buckets.
pub fn brute_force_optimize(grid: &HitGrid, tau: f64) -> Result<Region> {
    let slope = Slope::new(tau)?;
    let regions = enumerate_admissible(grid)?;
    let mut best: Option<((i128, usize), Region)> = None;
    for r in regions {
        let key = exact_key(grid, slope, &r).expect("enumeration skips missing buckets");
        let replace = match &best {
            None => true,
            Some((k, b)) => key > *k || (key == *k && r.tie_key() < b.tie_key()),
        };
        if replace {
            best = Some((key, r));
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_default())
}

/// Exhaustive optimized-support region: the largest admissible region with
/// confidence at least `theta`.
pub fn brute_force_optimize_support(grid: &HitGrid, theta: f64) -> Result<Option<(Region, RegionStats)>> {
    let mut best: Option<(Region, RegionStats)> = None;
    for r in enumerate_admissible(grid)? {
        let st = region_stats(grid, &r)?;
        let Some(conf) = st.confidence() else { continue };
        if conf < theta {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((_, b)) => (st.support, st.hit) > (b.support, b.hit),
        };
        if replace {
            best = Some((r, st));
        }
    }
    Ok(best)
}

/// Exhaustive optimized-confidence region: the most confident admissible
/// region with at least `min_buckets` buckets.
pub fn brute_force_optimize_confidence(
    grid: &HitGrid,
    min_buckets: usize,
) -> Result<Option<(Region, RegionStats)>> {
    let mut best: Option<(Region, RegionStats)> = None;
    for r in enumerate_admissible(grid)? {
        let st = region_stats(grid, &r)?;
        if st.buckets == 0 || st.buckets < min_buckets {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((_, b)) => {
                // Compare H/S exactly by cross-multiplication.
                let lhs = u128::from(st.hit) * u128::from(b.support);
                let rhs = u128::from(b.hit) * u128::from(st.support);
                lhs > rhs || (lhs == rhs && st.support > b.support)
            }
        };
        if replace {
            best = Some((r, st));
        }
    }
    Ok(best)
}

/// A region found by slope search, with the slope that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedRegion {
    pub region: Region,
    pub stats: RegionStats,
    pub tau: f64,
    /// Number of optimized-gain evaluations performed.
    pub evaluations: usize,
}

impl MinedRegion {
    pub fn confidence(&self) -> f64 {
        self.stats.confidence().unwrap_or(0.0)
    }
}

/// Slope resolution of the binary searches: distinct ratios `H/S` with
/// `H, S <= scale·M` differ by at least `(scale·M)^-2`.
pub fn slope_precision(grid: &HitGrid) -> f64 {
    let total = grid.scale as f64 * grid.len() as f64;
    1.0 / (total * total)
}

/// Approximate optimized-support region: the largest region with `Θ >= θ`
/// among the optimized-gain regions visited by a binary search on `τ`.
pub fn optimize_support(grid: &HitGrid, theta: f64) -> Result<Option<MinedRegion>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
    }
    slope_search(grid, |st| st.confidence().is_some_and(|c| c >= theta), |a, b| {
        (a.support, a.hit) > (b.support, b.hit)
    }, SearchDirection::LowerWhenSatisfied)
}

/// Approximate optimized-confidence region: the most confident region with
/// at least `min_buckets` buckets among the visited optimized-gain regions.
pub fn optimize_confidence(grid: &HitGrid, min_buckets: usize) -> Result<Option<MinedRegion>> {
    if min_buckets > grid.len() {
        return Err(Error::invalid(format!(
            "support floor of {min_buckets} buckets exceeds the {} in the grid",
            grid.len()
        )));
    }
    slope_search(grid, |st| st.buckets > 0 && st.buckets >= min_buckets, |a, b| {
        let lhs = u128::from(a.hit) * u128::from(b.support);
        let rhs = u128::from(b.hit) * u128::from(a.support);
        lhs > rhs || (lhs == rhs && a.support > b.support)
    }, SearchDirection::RaiseWhenSatisfied)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SearchDirection {
    /// Satisfied regions are followed by smaller slopes (more support).
    LowerWhenSatisfied,
    /// Satisfied regions are followed by larger slopes (more confidence).
    RaiseWhenSatisfied,
}

fn slope_search(
    grid: &HitGrid,
    satisfies: impl Fn(&RegionStats) -> bool,
    prefer: impl Fn(&RegionStats, &RegionStats) -> bool,
    direction: SearchDirection,
) -> Result<Option<MinedRegion>> {
    check_grid_size(grid)?;
    let precision = slope_precision(grid);
    let mut found: Option<MinedRegion> = None;
    let mut evaluations = 0;
    let mut visit = |tau: f64, found: &mut Option<MinedRegion>| -> Result<RegionStats> {
        let region = optimize_gain(grid, tau)?;
        let stats = region_stats(grid, &region)?;
        evaluations += 1;
        if satisfies(&stats) && found.as_ref().is_none_or(|f| prefer(&stats, &f.stats)) {
            *found = Some(MinedRegion {
                region,
                stats,
                tau,
                evaluations: 0,
            });
        }
        Ok(stats)
    };

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let at_zero = visit(lo, &mut found)?;
    let done = match direction {
        // The zero-slope region has maximal support.
        SearchDirection::LowerWhenSatisfied => satisfies(&at_zero),
        SearchDirection::RaiseWhenSatisfied => !satisfies(&at_zero),
    };
    if !done {
        visit(hi, &mut found)?;
        while hi - lo > precision {
            let mid = 0.5 * (lo + hi);
            let st = visit(mid, &mut found)?;
            let ok = satisfies(&st);
            match direction {
                SearchDirection::LowerWhenSatisfied => {
                    // Empty regions mean the slope is already too steep.
                    if ok || st.buckets == 0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                SearchDirection::RaiseWhenSatisfied => {
                    if ok {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
        }
    }
    Ok(found.map(|f| MinedRegion { evaluations, ..f }))
}

/// Strongly model-based region confidence: the region variable
/// `Q = Σ w·B / W` with estimated variance `Ψ² = Σ w²·Σ² / W²` and the t
/// distribution on `η - 1` degrees of freedom.
pub fn model_based_region_confidence(
    buckets: &[BucketEstimate],
    weights: &[f64],
    threshold: f64,
) -> Result<f64> {
    if buckets.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} buckets but {} weights",
            buckets.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("region weights must be positive"));
    }
    let total: f64 = weights.iter().sum();
    let mean = buckets
        .iter()
        .zip(weights)
        .map(|(b, w)| w * b.mean)
        .sum::<f64>()
        / total;
    let variance = buckets
        .iter()
        .zip(weights)
        .map(|(b, w)| w * w * b.variance)
        .sum::<f64>()
        / (total * total);
    t_confidence(mean, variance, buckets.len(), threshold)
}

/// How missing buckets enter the miner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Regions may not cover missing buckets.
    #[default]
    Exclude,
    /// Missing buckets count as hit 0.
    Zero,
}

impl MissingPolicy {
    pub fn apply(&self, grid: &HitGrid) -> HitGrid {
        match self {
            MissingPolicy::Exclude => grid.clone(),
            MissingPolicy::Zero => grid.zero_filled(),
        }
    }
}
