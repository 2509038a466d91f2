//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use bermine::analysis::{cross_validate, jaccard_where, loess_fit, SurfacePoint};
use bermine::bucketing::{bucket_confidence, confidence_map, hit, BucketEstimate, BucketGrid, HitGrid};
use bermine::grid::{Axes, Grid};
use bermine::miner::{
    brute_force_optimize, brute_force_optimize_support, is_admissible, model_based_region_confidence,
    optimize_gain, optimize_support, region_gain, region_stats, MinedRegion,
};
use bermine::sampler::{sample_point, sweep, PerformanceDatabase, StopReason};
use bermine::simgen::{closed_form_bep, simulate_block, BlockSimulator, MonteCarlo, PointConfig, SimBlockConfig};
use bermine::stats::{clamp_sample, confidence_below, BerSample, PointEstimate, StoppingConfig};
use bermine::Result as BerResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn worked_example() -> Outcome {
    let est = PointEstimate::new(5e-4, 8.87e-4f64.powi(2), 6).map_err(|e| e.to_string())?;
    let p = confidence_below(&est, 1e-3).map_err(|e| e.to_string())?;
    let h = hit(p);
    check((p - 0.887).abs() <= 0.001 && h == 887, format!("confidence {p:.6}, hit {h}"))
}

/// Every block reports zero errors.
struct Silent;

impl BlockSimulator for Silent {
    fn simulate(&self, _: PointConfig, _: u64) -> BerResult<BerSample> {
        clamp_sample(0, 800_000)
    }
}

fn clamp_reproduction() -> Outcome {
    let value = clamp_sample(0, 800_000).map_err(|e| e.to_string())?.value();
    let rec = sample_point(PointConfig::new(30.0, 30.0), &StoppingConfig::default(), &Silent)
        .map_err(|e| e.to_string())?;
    let est = rec.estimate().ok_or("no estimate")?;
    let conf = confidence_below(&est, 1e-3).map_err(|e| e.to_string())?;
    check(
        value == 3.75e-6 && rec.n() == 2 && rec.stop_reason == Some(StopReason::RelativeAccuracy) && conf == 1.0,
        format!(
            "BER {value:e}, stopped after {} blocks by {:?}, confidence {conf}",
            rec.n(),
            rec.stop_reason
        ),
    )
}

fn random_hits(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> HitGrid {
    let hits = Grid::from_fn(nx, ny, |_, _| {
        Some(match rng.random_range(0..4) {
            0 => 0,
            1 => 1000,
            2 => rng.random_range(900..=1000),
            _ => rng.random_range(0..=1000),
        })
    });
    HitGrid::new(hits, 1000)
}

fn miner_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let mut cases = 0;
    for _ in 0..40 {
        let (nx, ny) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let grid = random_hits(&mut rng, nx, ny);
        for tau in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let dp = optimize_gain(&grid, tau).map_err(|e| e.to_string())?;
            let bf = brute_force_optimize(&grid, tau).map_err(|e| e.to_string())?;
            let (gd, gb) = (
                region_gain(&grid, &dp, tau).map_err(|e| e.to_string())?,
                region_gain(&grid, &bf, tau).map_err(|e| e.to_string())?,
            );
            if gd != gb {
                return Err(format!("{nx}x{ny} grid at tau {tau}: DP gain {gd}, exhaustive {gb}"));
            }
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("{cases} grid/slope cases agree exactly in {secs:.2} s"))
}

fn support_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut deviations = Vec::new();
    let mut misses = 0;
    let mut cases = 0;
    for _ in 0..150 {
        let (nx, ny) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let grid = random_hits(&mut rng, nx, ny);
        for theta in [0.7, 0.9, 0.95, 0.99] {
            let found = optimize_support(&grid, theta).map_err(|e| e.to_string())?;
            let best = brute_force_optimize_support(&grid, theta).map_err(|e| e.to_string())?;
            cases += 1;
            match (found, best) {
                (Some(m), Some((_, b))) => {
                    let stats = region_stats(&grid, &m.region).map_err(|e| e.to_string())?;
                    if !is_admissible(&m.region) || m.confidence() < theta || stats != m.stats {
                        return Err(format!("unsound region at theta {theta}: {m:?}"));
                    }
                    if m.stats.support > b.support {
                        return Err(format!("support {} exceeds optimum {}", m.stats.support, b.support));
                    }
                    deviations.push((b.support - m.stats.support) as f64 / b.support as f64);
                }
                (None, Some(_)) => {
                    misses += 1;
                    deviations.push(1.0);
                }
                (Some(m), None) => return Err(format!("region {m:?} found where none qualifies")),
                (None, None) => {}
            }
        }
    }
    let exact = deviations.iter().filter(|d| **d == 0.0).count();
    let mean = deviations.iter().sum::<f64>() / deviations.len().max(1) as f64;
    let max = deviations.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "{cases} cases sound; support shortfall vs optimum: {exact}/{} exact, mean {mean:.4}, max {max:.4}, {misses} missed",
        deviations.len()
    ))
}

fn support_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Smooth confidence surface with noise: high in one corner.
    let hits = Grid::from_fn(20, 20, |x, y| {
        let base = ((x + y) as f64 / 38.0 * 1400.0 - 300.0).clamp(0.0, 1000.0);
        let noisy = base + rng.random_range(-150.0..150.0);
        Some(noisy.clamp(0.0, 1000.0).round() as u32)
    });
    let grid = HitGrid::new(hits, 1000);
    let mut prev = u64::MAX;
    let mut supports = Vec::new();
    for k in 0..50 {
        let tau = k as f64 / 49.0;
        let r = optimize_gain(&grid, tau).map_err(|e| e.to_string())?;
        let s = region_stats(&grid, &r).map_err(|e| e.to_string())?.support;
        if s > prev {
            return Err(format!("support rose from {prev} to {s} at tau {tau}"));
        }
        prev = s;
        supports.push(s / 1000);
    }
    Ok(format!(
        "buckets from {} at tau 0 to {} at tau 1 over 50 slopes, never increasing",
        supports[0], supports[49]
    ))
}

const PILOT_BLOCKS: u64 = 1000;

fn simulator_fidelity() -> Outcome {
    let start = Instant::now();
    let mut within = 0;
    let mut lines = Vec::new();
    let levels = [0.0, 15.0, 30.0];
    let points: Vec<PointConfig> = levels
        .iter()
        .flat_map(|&a| levels.iter().map(move |&b| PointConfig::new(a, b)))
        .collect();
    let mean_ber = |p: PointConfig, seed0: u64, blocks: u64| -> Vec<f64> {
        (0..blocks)
            .into_par_iter()
            .map(|k| {
                let cfg = SimBlockConfig {
                    seed: seed0 + k,
                    ..SimBlockConfig::default()
                };
                simulate_block(p, &cfg).expect("valid block").raw_ber()
            })
            .collect()
    };
    for &p in &points {
        // At 30 dB a block sees about 0.15 bursty errors, so a short pilot
        // misjudges the spread; 1000 pilot blocks pin it down.
        let pilot = mean_ber(p, 1_000_000, PILOT_BLOCKS);
        let pm = pilot.iter().sum::<f64>() / PILOT_BLOCKS as f64;
        let pilot_sd = (pilot.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / (PILOT_BLOCKS - 1) as f64).sqrt();
        let se = pilot_sd / 10.0;
        let run = mean_ber(p, 0, 100);
        let mean = run.iter().sum::<f64>() / 100.0;
        let oracle = closed_form_bep(p);
        let z = (mean - oracle) / se;
        if z.abs() <= 3.0 {
            within += 1;
        }
        lines.push(format!("({}, {}) z={z:+.2}", p.s1_db, p.s2_db));
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = within as f64 / points.len() as f64;
    check(
        frac >= 0.95 && secs < 300.0,
        format!("{within}/9 points within 3 SE in {secs:.1} s [{}]", lines.join(", ")),
    )
}

const T: f64 = 1e-3;
const THETA: f64 = 0.99;

fn end_to_end_db() -> &'static (PerformanceDatabase, f64) {
    static DB: OnceLock<(PerformanceDatabase, f64)> = OnceLock::new();
    DB.get_or_init(|| {
        let start = Instant::now();
        let cfg = StoppingConfig {
            min_samples: 3,
            ..StoppingConfig::default()
        };
        let sim = MonteCarlo {
            block: SimBlockConfig {
                seed: 2024,
                ..SimBlockConfig::default()
            },
        };
        let db = sweep(&Axes::square(3, 22, 1), &cfg, &sim).expect("sweep succeeds");
        (db, start.elapsed().as_secs_f64())
    })
}

fn oracle_below(axes: &Axes, x: usize, y: usize) -> bool {
    closed_form_bep(PointConfig::new(axes.x[x], axes.y[y])) < T
}

fn end_to_end() -> Outcome {
    let (db, sim_secs) = end_to_end_db();
    let axes = db.axes();
    let map = confidence_map(db, &BucketGrid::identity(axes), T).map_err(|e| e.to_string())?;
    let mined: MinedRegion = optimize_support(&map.hits, THETA)
        .map_err(|e| e.to_string())?
        .ok_or("no region reaches the confidence target")?;
    let r = &mined.region;
    let cells: Vec<(usize, usize)> = r.cells().collect();
    let good = cells.iter().filter(|&&(x, y)| oracle_below(axes, x, y)).count();
    let frac = good as f64 / cells.len() as f64;

    let g = region_gain(&map.hits, r, mined.tau).map_err(|e| e.to_string())?;
    let gt = region_gain(&map.hits, &r.transpose(), mined.tau).map_err(|e| e.to_string())?;
    let gt_opt = region_gain(
        &map.hits.transpose(),
        &optimize_gain(&map.hits.transpose(), mined.tau).map_err(|e| e.to_string())?,
        mined.tau,
    )
    .map_err(|e| e.to_string())?;
    let symmetric = g == gt && g == gt_opt;

    // Width in imbalance dB for rows whose diagonal bucket is included.
    let mut widths = Vec::new();
    for y in 0..axes.ny() {
        if !r.contains(y, y) {
            continue;
        }
        let min_x = (0..axes.nx()).find(|&x| r.contains(x, y)).expect("row is non-empty");
        widths.push(axes.y[y] - axes.x[min_x]);
    }
    let widening = widths.windows(2).all(|w| w[1] >= w[0]);
    check(
        frac >= 0.99 && symmetric && widening && !widths.is_empty(),
        format!(
            "{} buckets, {:.2}% with oracle BEP < T, gain {g} vs reflected {gt}, widths {widths:?}; \
             {} samples over {} points simulated in {sim_secs:.1} s",
            cells.len(),
            100.0 * frac,
            db.simulated_samples(),
            db.simulated_points()
        ),
    )
}

fn cross_validation_stability() -> Outcome {
    let (db, _) = end_to_end_db();
    let axes = db.axes();
    let report = cross_validate(db, 3, T, THETA).map_err(|e| e.to_string())?;
    let (nx, ny) = (axes.nx(), axes.ny());
    let in_band = |x: usize, y: usize| {
        let here = oracle_below(axes, x, y);
        (-1i64..=1).any(|dx| {
            (-1i64..=1).any(|dy| {
                let (a, b) = (x as i64 + dx, y as i64 + dy);
                a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && oracle_below(axes, a as usize, b as usize) != here
            })
        })
    };
    let regions: Vec<_> = report.folds.iter().map(|f| f.region()).collect();
    let mut pairs = Vec::new();
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            pairs.push(jaccard_where(&regions[i], &regions[j], |x, y| !in_band(x, y)));
        }
    }
    let min_j = pairs.iter().copied().fold(1.0, f64::min);
    let supports: Vec<u64> = report.supports();
    let max = *supports.iter().max().unwrap_or(&0) as f64;
    let min = *supports.iter().min().unwrap_or(&0) as f64;
    let spread = if max > 0.0 { (max - min) / max } else { 1.0 };
    check(
        min_j >= 0.9 && spread <= 0.05 && max > 0.0,
        format!(
            "pairwise Jaccard off the boundary band {pairs:.4?}, fold buckets {:?}, spread {:.2}%, {} points excluded",
            supports.iter().map(|s| s / 1000).collect::<Vec<_>>(),
            100.0 * spread,
            report.excluded.len()
        ),
    )
}

fn small_variance_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let below = trial % 2 == 0;
        let eta = rng.random_range(3..=40);
        let buckets: Vec<BucketEstimate> = (0..eta)
            .map(|_| BucketEstimate {
                mean: if below {
                    rng.random_range(1e-6..5e-4)
                } else {
                    rng.random_range(2e-3..5e-2)
                },
                variance: rng.random_range(0.0..=1e-12),
                n_total: rng.random_range(3..=50),
                priors: vec![1.0],
            })
            .collect();
        let hits: u64 = buckets
            .iter()
            .map(|b| u64::from(hit(bucket_confidence(b, T).expect("valid bucket"))))
            .sum();
        let theta = hits as f64 / (1000 * eta) as f64;
        let weights: Vec<f64> = (0..eta).map(|_| rng.random_range(0.5..2.0)).collect();
        let model = model_based_region_confidence(&buckets, &weights, T).map_err(|e| e.to_string())?;
        let diff = (model - theta).abs();
        worst = worst.max(diff);
        if diff > 1e-3 {
            return Err(format!("trial {trial}: model {model}, confidence {theta}"));
        }
    }
    Ok(format!("200 regions (half below, half above T), max |difference| {worst:e}"))
}

fn loess_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut queries = 0;
    for _ in 0..5 {
        let (a, b, c) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-10.0..10.0),
        );
        let f = |x: f64, y: f64| a * x + b * y + c;
        // Scattered points and the 20×20 lattice.
        let scattered: Vec<SurfacePoint> = (0..400)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
                SurfacePoint { s1: x, s2: y, z: f(x, y) }
            })
            .collect();
        let lattice: Vec<SurfacePoint> = (0..400)
            .map(|k| {
                let (x, y) = ((3 + k / 20) as f64, (3 + k % 20) as f64);
                SurfacePoint { s1: x, s2: y, z: f(x, y) }
            })
            .collect();
        for (pts, lo, hi) in [(scattered, 1.0, 19.0), (lattice, 4.0, 21.0)] {
            let s = loess_fit(pts, 0.05).map_err(|e| e.to_string())?;
            for _ in 0..200 {
                let (x, y) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
                let p = s.predict(x, y).ok_or("interior query masked")?;
                if p.degenerate {
                    return Err(format!("degenerate neighborhood at ({x}, {y})"));
                }
                worst = worst.max((p.value - f(x, y)).abs());
                queries += 1;
            }
        }
    }
    check(worst <= 1e-9, format!("{queries} interior queries, max error {worst:e}"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "worked example", worked_example),
        (2, "zero-error clamp", clamp_reproduction),
        (3, "miner oracle equivalence", miner_oracle),
        (4, "optimized-support soundness", support_soundness),
        (5, "support monotonicity", support_monotonicity),
        (6, "simulator fidelity", simulator_fidelity),
        (7, "end-to-end oracle surface", end_to_end),
        (8, "cross-validation stability", cross_validation_stability),
        (9, "small-variance equivalence", small_variance_equivalence),
        (10, "loess exactness", loess_exactness),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}, {secs:.2} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}, {secs:.2} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 10 acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
