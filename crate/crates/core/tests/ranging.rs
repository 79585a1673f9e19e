use icon_core::geometry::{Point2, Point3};
use icon_core::ranging::{multilaterate, range_cost, twr_distance, TwrExchange, SPEED_OF_LIGHT};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEIGHT: f64 = 1.0;

fn corners() -> Vec<Point3> {
    vec![
        Point3::new(0.0, 0.0, 2.0),
        Point3::new(5.0, 0.0, 2.0),
        Point3::new(5.0, 5.0, 2.0),
        Point3::new(0.0, 5.0, 2.0),
    ]
}

fn distances(anchors: &[Point3], p: Point2) -> Vec<f64> {
    anchors.iter().map(|a| p.at_height(HEIGHT).distance(a)).collect()
}

/// Brute-force minimizer of the range cost on a regular grid over the area.
fn grid_search(anchors: &[Point3], d: &[f64], step: f64) -> (Point2, f64) {
    let n = (5.0 / step).round() as usize;
    let mut best = (Point2::default(), f64::INFINITY);
    for i in 0..=n {
        for j in 0..=n {
            let p = Point2::new(i as f64 * step, j as f64 * step);
            let c = range_cost(anchors, d, HEIGHT, p);
            if c < best.1 {
                best = (p, c);
            }
        }
    }
    best
}

#[test]
fn noisy_fixes_match_the_grid_oracle() {
    let anchors = corners();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let truth = Point2::new(rng.random_range(0.3..4.7), rng.random_range(0.3..4.7));
        let d: Vec<f64> = distances(&anchors, truth).iter().map(|d| d + rng.random_range(-0.15..0.15)).collect();
        let fix = multilaterate(&anchors, &d, HEIGHT).unwrap();
        assert!(fix.converged);
        let (grid, _) = grid_search(&anchors, &d, 0.01);
        assert!(fix.position.distance(&grid) <= 0.02, "{:?} vs {:?}", fix.position, grid);

        // the solution is no worse than any point of a 10 cm grid
        let (_, coarse) = grid_search(&anchors, &d, 0.1);
        assert!(range_cost(&anchors, &d, HEIGHT, fix.position) <= coarse + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))), ..ProptestConfig::default() })]
    #[test]
    fn exact_distances_are_recovered(x in 0.0f64..5.0, y in 0.0f64..5.0) {
        let anchors = corners();
        let truth = Point2::new(x, y);
        let fix = multilaterate(&anchors, &distances(&anchors, truth), HEIGHT).unwrap();
        prop_assert!(fix.position.distance(&truth) <= 1e-6);
    }

    #[test]
    fn common_clock_offsets_cancel(
        tof in 0.0f64..1e-7,
        reply in 1e-4f64..1e-2,
        t0 in 0.0f64..10.0,
        target_offset in -1.0f64..1.0,
        anchor_offset in -1.0f64..1.0,
    ) {
        let x = TwrExchange {
            t_poll_tx: t0,
            t_poll_rx: t0 + tof,
            t_resp_tx: t0 + tof + reply,
            t_resp_rx: t0 + 2.0 * tof + reply,
        };
        let d = twr_distance(&x).unwrap();
        let shifted_target = TwrExchange { t_poll_tx: x.t_poll_tx + target_offset, t_resp_rx: x.t_resp_rx + target_offset, ..x };
        let shifted_anchor = TwrExchange { t_poll_rx: x.t_poll_rx + anchor_offset, t_resp_tx: x.t_resp_tx + anchor_offset, ..x };
        // timestamps near 10 s carry ~2e-15 s of rounding, i.e. ~1e-6 m
        let tol = 4.0 * f64::EPSILON * (t0.abs() + 2.0) * SPEED_OF_LIGHT;
        prop_assert!((twr_distance(&shifted_target).unwrap() - d).abs() <= tol);
        prop_assert!((twr_distance(&shifted_anchor).unwrap() - d).abs() <= tol);
        prop_assert!((d - tof * SPEED_OF_LIGHT).abs() <= tol);
    }
}
