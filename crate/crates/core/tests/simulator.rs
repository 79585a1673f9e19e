use icon_core::aoa::MusicEstimator;
use icon_core::domain::{Records, Scenario, Technology};
use icon_core::evaluation::mean;
use icon_core::geometry::{angular_distance_deg, Area, Point2};
use icon_core::simulator::*;
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECORDS: usize = 100_000;

fn bed(tech: Technology, duration: f64) -> Testbed {
    let mut b = Testbed::new(tech);
    b.duration_s = Some(duration);
    b
}

#[test]
fn uwb_records_satisfy_invariants() {
    let testbed = Testbed::new(Technology::Uwb);
    let (mut total, mut index) = (0, 0);
    while total < RECORDS {
        index += 1;
        let scenario = Scenario::ALL[index % 2];
        let s = gen_session(scenario, index, &NoiseProfile::default(), &testbed).unwrap();
        let Records::Uwb(rs) = s.records() else { panic!("UWB session expected") };
        assert_eq!(rs.len(), 900);
        for w in rs.windows(2) {
            assert!(w[1].timestamp > w[0].timestamp);
        }
        for r in rs {
            r.validate().unwrap();
            assert!(testbed.area.contains(&r.truth));
            assert!(r.dist.iter().all(|d| *d >= 0.0));
        }
        total += rs.len();
    }
}

#[test]
fn ble_records_satisfy_invariants() {
    let testbed = Testbed::new(Technology::Ble);
    let estimator = MusicEstimator::default();
    let profile = NoiseProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut dropped = 0;
    for _ in 0..RECORDS {
        let truth = Point2::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        match synth_ble_record(truth, &testbed.layout, &testbed.ble, &profile, &estimator, &mut rng) {
            Ok(r) => {
                r.validate().unwrap();
                assert_eq!(r.truth, truth);
                assert!(r.aoa.iter().all(|a| (-180.0..180.0).contains(a)));
            }
            Err(_) => dropped += 1,
        }
    }
    assert!(dropped < RECORDS / 100, "{dropped} records dropped");
}

#[test]
fn noiseless_uwb_baseline_is_exact() {
    for scenario in Scenario::ALL {
        let s = gen_session(scenario, 1, &NoiseProfile::noiseless(3), &bed(Technology::Uwb, 30.0)).unwrap();
        let worst = baseline_errors(&s).into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-6, "{scenario}: {worst}");
    }
}

#[test]
fn noiseless_ble_paths_are_within_a_grid_step() {
    let testbed = Testbed::new(Technology::Ble);
    let estimator = MusicEstimator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..500 {
        let truth = Point2::new(rng.random_range(0.1..4.9), rng.random_range(0.1..4.9));
        let r = synth_ble_record(truth, &testbed.layout, &testbed.ble, &NoiseProfile::noiseless(1), &estimator, &mut rng).unwrap();
        for (i, anchor) in testbed.layout.anchors.iter().enumerate() {
            let az = local_azimuth(truth, anchor);
            for a in &r.aoa[2 * i..2 * i + 2] {
                assert!(angular_distance_deg(*a, az) <= estimator.grid_step_deg, "{a} vs {az}");
            }
        }
    }
}

#[test]
fn larger_nlos_bias_means_larger_baseline_error() {
    let testbed = bed(Technology::Uwb, 60.0);
    let levels = [0.5, 1.0, 2.0];
    let errors: Vec<f64> = levels
        .iter()
        .map(|&b| {
            let profile = NoiseProfile { nlos_bias_max: b, ..NoiseProfile::default() };
            let all: Vec<f64> = (1..=4)
                .flat_map(|k| baseline_errors(&gen_session(Scenario::ALL[k % 2], k, &profile, &testbed).unwrap()))
                .collect();
            mean(&all)
        })
        .collect();
    println!("nlos_bias_max {levels:?} -> mean baseline error {errors:?}");
    assert!(errors.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn default_datasets_have_the_expected_shape() {
    let uwb = gen_dataset(Technology::Uwb, &Scenario::ALL, 5, &NoiseProfile::default(), &Testbed::new(Technology::Uwb)).unwrap();
    assert_eq!(uwb.len(), 10);
    assert!(uwb.iter().all(|s| s.len() == 900));
    let ids: Vec<_> = uwb.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids[..2], ["walking-1", "walking-2"]);
    assert_eq!(ids[5], "trolley-1");

    let ble = gen_dataset(Technology::Ble, &[Scenario::Walking], 2, &NoiseProfile::default(), &bed(Technology::Ble, 10.0)).unwrap();
    assert_eq!(ble.len(), 2);
    for s in &ble {
        let t = s.records().timestamps();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(s.len() >= 95);
    }
    assert!(gen_dataset(Technology::Ble, &Scenario::ALL, 1, &NoiseProfile::default(), &Testbed::new(Technology::Ble)).is_err());
}

#[test]
fn sessions_depend_only_on_their_inputs() {
    let testbed = bed(Technology::Ble, 8.0);
    let a = gen_session(Scenario::Trolley, 2, &NoiseProfile::default(), &testbed).unwrap();
    let b = gen_session(Scenario::Trolley, 2, &NoiseProfile::default(), &testbed).unwrap();
    assert_eq!(a, b);
    let c = gen_session(Scenario::Trolley, 3, &NoiseProfile::default(), &testbed).unwrap();
    assert_ne!(a.records(), c.records());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))), ..ProptestConfig::default() })]
    #[test]
    fn trajectories_stay_inside_and_below_top_speed(
        seed in any::<u64>(),
        walking in any::<bool>(),
        w in 3.0f64..12.0,
        h in 3.0f64..12.0,
        duration in 1.0f64..120.0,
    ) {
        let scenario = if walking { Scenario::Walking } else { Scenario::Trolley };
        let area = Area::with_size(w, h);
        let t = gen_trajectory(scenario, duration, &area, seed).unwrap();
        prop_assert_eq!(t.points.len(), (duration * SAMPLE_RATE_HZ).round() as usize);
        for p in t.positions() {
            prop_assert!(area.contains(&p));
        }
        for pair in t.points.windows(2) {
            let (t0, p0) = pair[0];
            let (t1, p1) = pair[1];
            prop_assert!(t1 > t0);
            prop_assert!(p0.distance(&p1) / (t1 - t0) <= MAX_SPEED + 1e-9);
        }
    }
}
