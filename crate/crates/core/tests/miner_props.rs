use bermine::bucketing::HitGrid;
use bermine::grid::Grid;
use bermine::miner::{
    brute_force_optimize, brute_force_optimize_confidence, brute_force_optimize_support,
    cells_admissible, is_admissible, optimize_confidence, optimize_gain, optimize_support,
    region_gain, region_stats, Region,
};
use proptest::prelude::*;

/// Hit grids up to 4×4 drawn from a small value set so that ties are common,
/// with optional missing buckets.
fn hit_grid(max_side: usize, masks: bool) -> impl Strategy<Value = HitGrid> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(nx, ny)| {
        let cell = if masks {
            prop_oneof![
                1 => Just(None),
                8 => prop_oneof![Just(0u32), Just(250), Just(500), Just(900), Just(1000), 0u32..=1000].prop_map(Some),
            ]
            .boxed()
        } else {
            prop_oneof![Just(0u32), Just(250), Just(500), Just(900), Just(1000), 0u32..=1000]
                .prop_map(Some)
                .boxed()
        };
        proptest::collection::vec(cell, nx * ny).prop_map(move |cells| {
            HitGrid::new(Grid::from_fn(nx, ny, |x, y| cells[x * ny + y]), 1000)
        })
    })
}

fn tau() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(0.25),
        Just(0.5),
        Just(0.75),
        Just(0.9),
        Just(1.0),
        0.0f64..=1.0
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn dp_matches_exhaustive_search(grid in hit_grid(4, true), tau in tau()) {
        let dp = optimize_gain(&grid, tau).unwrap();
        let bf = brute_force_optimize(&grid, tau).unwrap();
        prop_assert!(is_admissible(&dp));
        prop_assert_eq!(&dp, &bf);
        prop_assert_eq!(region_gain(&grid, &dp, tau).unwrap(), region_gain(&grid, &bf, tau).unwrap());
    }

    #[test]
    fn column_shape_matches_line_definition(
        nx in 1usize..=4, ny in 1usize..=4, mask in any::<u16>()
    ) {
        let cells: Vec<(usize, usize)> = (0..nx * ny)
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| (k / ny, k % ny))
            .collect();
        let by_lines = cells_admissible(&cells, nx, ny);
        let by_columns = Region::from_cells(&cells).is_some_and(|r| is_admissible(&r));
        prop_assert_eq!(by_lines, by_columns);
    }

    #[test]
    fn support_shrinks_as_slope_grows(grid in hit_grid(4, true), a in tau(), b in tau()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = region_stats(&grid, &optimize_gain(&grid, lo).unwrap()).unwrap();
        let s_hi = region_stats(&grid, &optimize_gain(&grid, hi).unwrap()).unwrap();
        prop_assert!(s_hi.support <= s_lo.support);
        if let (Some(c_lo), Some(c_hi)) = (s_lo.confidence(), s_hi.confidence()) {
            prop_assert!(c_hi >= c_lo - 1e-12);
        }
    }

    #[test]
    fn gain_is_invariant_under_reflection(grid in hit_grid(5, true), tau in tau()) {
        let r = optimize_gain(&grid, tau).unwrap();
        let t = grid.transpose();
        let rt = optimize_gain(&t, tau).unwrap();
        prop_assert_eq!(region_gain(&grid, &r, tau).unwrap(), region_gain(&t, &rt, tau).unwrap());
        prop_assert_eq!(region_gain(&t, &r.transpose(), tau).unwrap(), region_gain(&grid, &r, tau).unwrap());
    }

    #[test]
    fn optimized_support_is_sound(grid in hit_grid(4, true), theta in prop_oneof![Just(0.7), Just(0.9), Just(0.95), Just(0.99), 0.0f64..=1.0]) {
        let found = optimize_support(&grid, theta).unwrap();
        let best = brute_force_optimize_support(&grid, theta).unwrap();
        if let Some(m) = found {
            prop_assert!(is_admissible(&m.region));
            prop_assert!(m.confidence() >= theta);
            prop_assert_eq!(region_stats(&grid, &m.region).unwrap(), m.stats);
            let (_, b) = best.expect("a qualifying region exists");
            prop_assert!(m.stats.support <= b.support);
        }
    }

    #[test]
    fn optimized_confidence_is_sound(grid in hit_grid(4, true), floor in 0usize..=6) {
        prop_assume!(floor <= grid.len());
        let found = optimize_confidence(&grid, floor).unwrap();
        let best = brute_force_optimize_confidence(&grid, floor).unwrap();
        if let Some(m) = found {
            prop_assert!(is_admissible(&m.region));
            prop_assert!(m.stats.buckets >= floor.max(1));
            let (_, b) = best.expect("a qualifying region exists");
            prop_assert!(m.confidence() <= b.confidence().unwrap() + 1e-12);
        }
    }

    #[test]
    fn dp_never_covers_missing_buckets(grid in hit_grid(6, true), tau in tau()) {
        let r = optimize_gain(&grid, tau).unwrap();
        prop_assert!(is_admissible(&r));
        prop_assert!(r.cells().all(|(x, y)| grid.get(x, y).is_some()));
        prop_assert!(region_gain(&grid, &r, tau).unwrap() >= 0.0);
    }
}

#[test]
fn larger_grid_dp_beats_every_rectangle() {
    // Every rectangle is admissible, so the optimum must dominate them all.
    let (nx, ny) = (9, 7);
    let mut state = 12345u64;
    let hits = Grid::from_fn(nx, ny, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Some(((state >> 33) % 1001) as u32)
    });
    let grid = HitGrid::new(hits, 1000);
    for tau in [0.3, 0.5, 0.62, 0.8] {
        let best = region_gain(&grid, &optimize_gain(&grid, tau).unwrap(), tau).unwrap();
        for l in 0..nx {
            for r in l..nx {
                for s in 0..ny {
                    for t in s..ny {
                        let rect = Region::new(l, vec![(s, t); r - l + 1]);
                        assert!(region_gain(&grid, &rect, tau).unwrap() <= best + 1e-9);
                    }
                }
            }
        }
    }
}
