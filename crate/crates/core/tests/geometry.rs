use icon_core::geometry::{euclidean_error, Point2};
use icon_core::smoothing::moving_average;
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

fn point() -> impl Strategy<Value = Point2> {
    (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| Point2::new(x, y))
}

fn rotate(p: Point2, theta: f64) -> Point2 {
    let (s, c) = theta.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))), ..ProptestConfig::default() })]
    #[test]
    fn error_is_a_metric(a in point(), b in point(), c in point()) {
        prop_assert!(euclidean_error(&a, &c) <= euclidean_error(&a, &b) + euclidean_error(&b, &c) + 1e-9);
        prop_assert_eq!(euclidean_error(&a, &b), euclidean_error(&b, &a));
        prop_assert_eq!(euclidean_error(&a, &a), 0.0);
    }

    #[test]
    fn error_is_rigid_motion_invariant(a in point(), b in point(), t in point(), theta in -7.0f64..7.0) {
        let e = euclidean_error(&a, &b);
        prop_assert!((euclidean_error(&(a + t), &(b + t)) - e).abs() <= 1e-9);
        prop_assert!((euclidean_error(&rotate(a, theta), &rotate(b, theta)) - e).abs() <= 1e-9);
    }

    #[test]
    fn smoothing_constant_series_is_identity(p in point(), n in 1usize..50, w in 1usize..10) {
        let s = vec![p; n];
        let once = moving_average(&s, w).unwrap();
        prop_assert_eq!(&once, &s);
        prop_assert_eq!(moving_average(&once, w).unwrap(), s);
    }

    #[test]
    fn smoothing_stays_within_axis_ranges(s in prop::collection::vec(point(), 1..80), w in 1usize..10) {
        let out = moving_average(&s, w).unwrap();
        prop_assert_eq!(out.len(), s.len());
        let (xlo, xhi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.x), h.max(p.x)));
        let (ylo, yhi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.y), h.max(p.y)));
        for p in out {
            prop_assert!(p.x >= xlo && p.x <= xhi && p.y >= ylo && p.y <= yhi);
        }
    }
}
