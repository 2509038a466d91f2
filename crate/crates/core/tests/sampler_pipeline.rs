use bermine::grid::Axes;
use bermine::sampler::{rule_fired, sample_point, sweep, PerformanceDatabase, StopReason};
use bermine::simgen::{PointConfig, Synthetic};
use bermine::stats::StoppingConfig;

fn noisy() -> Synthetic {
    Synthetic::new(0.5, 800_000, 17).unwrap()
}

fn full_grid() -> PerformanceDatabase {
    sweep(&Axes::square(3, 42, 1), &StoppingConfig::default(), &noisy()).unwrap()
}

#[test]
fn no_earlier_stopping_opportunity_is_missed() {
    let cfg = StoppingConfig::default();
    let db = sweep(&Axes::square(3, 24, 1), &cfg, &noisy()).unwrap();
    for rec in db.records().values().filter(|r| !r.mirrored) {
        let n = rec.n();
        for k in cfg.min_samples..n {
            assert_eq!(rule_fired(&rec.samples[..k], &cfg), None, "{:?} stopped late", rec.point);
        }
        match rec.stop_reason.unwrap() {
            StopReason::SampleCap => assert_eq!(n, cfg.max_samples),
            reason => assert_eq!(rule_fired(&rec.samples, &cfg), Some(reason)),
        }
    }
}

#[test]
fn sweep_is_independent_of_processing_order() {
    let cfg = StoppingConfig::default();
    let axes = Axes::square(3, 20, 1);
    let sim = noisy();
    let parallel = sweep(&axes, &cfg, &sim).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| sweep(&axes, &cfg, &sim).unwrap());
    assert_eq!(parallel, single);
    // Points sampled one by one in reverse order match the sweep.
    for ix in (0..axes.nx()).rev() {
        for iy in (ix..axes.ny()).rev() {
            let rec = sample_point(PointConfig::new(axes.x[ix], axes.y[iy]), &cfg, &sim).unwrap();
            assert_eq!(&rec, parallel.get(ix, iy).unwrap());
        }
    }
}

#[test]
fn full_grid_sample_budget() {
    let db = full_grid();
    assert_eq!(db.records().len(), 1600);
    assert_eq!(db.simulated_points(), 820);
    let mean = db.simulated_samples() as f64 / db.simulated_points() as f64;
    println!("mean samples per simulated point: {mean:.2}");
    assert!((2.0..=50.0).contains(&mean), "{mean}");
}

#[test]
fn sample_cap_of_two_gives_two_samples_everywhere() {
    let cfg = StoppingConfig {
        max_samples: 2,
        ..Default::default()
    };
    let db = sweep(&Axes::square(3, 10, 1), &cfg, &noisy()).unwrap();
    assert!(db.records().values().all(|r| r.n() == 2));
}
