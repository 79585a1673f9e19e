use icon_core::calibration::{train, training_samples, TrainConfig};
use icon_core::domain::{Records, Scenario, Session, Technology, UwbRecord};
use icon_core::evaluation::*;
use icon_core::geometry::Point2;
use icon_core::simulator::{gen_dataset, NoiseProfile, Testbed};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

fn uwb_session(id: &str, n: usize, salt: f64) -> Session {
    let records = (0..n)
        .map(|k| {
            let x = k as f64 * 0.37 + salt;
            let p = Point2::new(2.5 + x.sin(), 2.5 + (1.3 * x).cos());
            UwbRecord {
                timestamp: k as f64 * 0.1,
                cir: [x.cos(), x.sin(), (2.0 * x).cos(), (0.5 * x).sin()],
                psa: [1000 + k as u32, 900, 800, 700],
                dist: [p.x, p.y, 5.0 - p.x, 5.0 - p.y],
                baseline: p + Point2::new(0.1, 0.0),
                truth: p,
            }
        })
        .collect();
    let scenario = id.rsplit_once('-').unwrap().0.parse().unwrap();
    Session::new(id, scenario, Records::Uwb(records)).unwrap()
}

fn short_dataset(per_scenario: usize, duration: f64, profile: &NoiseProfile) -> Vec<Session> {
    let mut bed = Testbed::new(Technology::Uwb);
    bed.duration_s = Some(duration);
    gen_dataset(Technology::Uwb, &Scenario::ALL, per_scenario, profile, &bed).unwrap()
}

fn quick(epochs: usize, seed: u64) -> CvConfig {
    CvConfig { train: TrainConfig { max_epochs: epochs, seed, ..TrainConfig::default() }, ..CvConfig::default() }
}

#[test]
fn ten_sessions_give_ten_folds_of_nine() {
    let s: Vec<_> = (1..=5)
        .flat_map(|k| [uwb_session(&format!("walking-{k}"), 3, 0.0), uwb_session(&format!("trolley-{k}"), 3, 0.0)])
        .collect();
    let folds = loso_split(&s).unwrap();
    assert_eq!(folds.len(), 10);
    assert!(folds.iter().all(|f| f.train.len() == 9));
    assert_eq!(loso_split(&s[..2]).unwrap().len(), 2);
    assert!(matches!(loso_split(&s[..1]), Err(icon_core::Error::NotEnoughSessions { .. })));
}

#[test]
fn failed_folds_are_excluded_and_listed() {
    // holding out the long session leaves too few samples to train on
    let s = vec![uwb_session("walking-1", 40, 0.0), uwb_session("walking-2", 4, 1.0), uwb_session("walking-3", 4, 2.0)];
    let run = run_cv(&s, Technology::Uwb, &quick(10, 1)).unwrap();
    assert!(!run.all_succeeded());
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].held_out, "walking-1");
    let ids: Vec<_> = run.folds.iter().map(|f| f.held_out.as_str()).collect();
    assert_eq!(ids, ["walking-2", "walking-3"]);
    let report = make_report(Technology::Uwb, &run).unwrap();
    assert_eq!(report.combined.records, 8);
    assert!(report.to_text().contains("FAILED"));
}

#[test]
fn rejects_mixed_technology() {
    let s = vec![uwb_session("walking-1", 20, 0.0), uwb_session("walking-2", 20, 1.0)];
    assert!(run_cv(&s, Technology::Ble, &quick(5, 1)).is_err());
}

#[test]
fn fold_models_see_only_their_training_sessions() {
    let s = short_dataset(2, 10.0, &NoiseProfile::default());
    let cfg = quick(15, 3);
    let train_set: Vec<&Session> = s[1..].iter().collect();
    let (_, model) = run_fold(&train_set, &s[0], &cfg).unwrap();
    let (direct, _) = train(&training_samples(&train_set).unwrap(), &cfg.train).unwrap();
    assert_eq!(model.to_text(), direct.to_text());

    // a different held-out session cannot change what was learned
    let other = short_dataset(2, 10.0, &NoiseProfile { rng_seed: 99, ..NoiseProfile::default() });
    let (_, again) = run_fold(&train_set, &other[0], &cfg).unwrap();
    assert_eq!(again.to_text(), model.to_text());
}

#[test]
fn baselines_do_not_depend_on_the_model() {
    let s = short_dataset(2, 10.0, &NoiseProfile::default());
    let a = run_cv(&s, Technology::Uwb, &quick(10, 1)).unwrap();
    let b = run_cv(&s, Technology::Uwb, &quick(10, 2)).unwrap();
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        assert_eq!(fa.baseline_errors, fb.baseline_errors);
    }
    assert!(a.folds.iter().zip(&b.folds).any(|(fa, fb)| fa.icon_errors != fb.icon_errors));
}

#[test]
fn fixed_seeds_reproduce_the_report() {
    let s = short_dataset(2, 10.0, &NoiseProfile::default());
    let a = make_report(Technology::Uwb, &run_cv(&s, Technology::Uwb, &quick(10, 5)).unwrap()).unwrap();
    let b = make_report(Technology::Uwb, &run_cv(&s, Technology::Uwb, &quick(10, 5)).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.folds_csv(), b.folds_csv());
    assert_eq!(a.cdf_csv(), b.cdf_csv());
}

#[test]
fn noiseless_uwb_without_smoothing_is_exact() {
    // trailing smoothing lags a moving target by ~2 samples, so the exactness
    // check runs unsmoothed; the smoothed case is compared against that lag
    let s = short_dataset(5, 30.0, &NoiseProfile::noiseless(1));
    let cfg = CvConfig { window: 1, ..CvConfig::default() };
    let run = run_cv_where(&s, Technology::Uwb, &cfg, |x| x.id == "walking-1" || x.id == "trolley-1").unwrap();
    assert_eq!(run.folds.len(), 2);
    for f in &run.folds {
        assert!(f.baseline_errors.iter().all(|e| *e < 1e-3), "{}", f.held_out);
        assert!(mean(&f.icon_errors) < 1e-3, "{}: ICON mean {}", f.held_out, mean(&f.icon_errors));
    }
}

#[test]
fn noiseless_smoothed_errors_are_the_smoothing_lag() {
    let s = short_dataset(2, 20.0, &NoiseProfile::noiseless(2));
    let run = run_cv_where(&s, Technology::Uwb, &quick(300, 1), |x| x.scenario == Scenario::Trolley).unwrap();
    for f in &run.folds {
        let session = s.iter().find(|x| x.id == f.held_out).unwrap();
        let truths = session.records().truths();
        let lag = icon_core::smoothing::moving_average(&truths, icon_core::smoothing::DEFAULT_WINDOW).unwrap();
        let lag: Vec<f64> = lag.iter().zip(&truths).map(|(a, b)| a.distance(b)).collect();
        for (b, l) in f.baseline_errors.iter().zip(&lag) {
            assert!((b - l).abs() < 1e-9);
        }
        assert!((mean(&f.icon_errors) - mean(&lag)).abs() < 1e-3);
    }
}

#[test]
fn icon_beats_baseline_under_heavy_nlos() {
    let profile = NoiseProfile { nlos_prob: 0.6, ..NoiseProfile::default() };
    let s = short_dataset(2, 30.0, &profile);
    let run = run_cv(&s, Technology::Uwb, &quick(100, 1)).unwrap();
    assert!(run.all_succeeded());
    let r = make_report(Technology::Uwb, &run).unwrap();
    assert!(r.combined.icon_mean < r.combined.baseline_mean, "{}", r.to_text());
}

fn brute_d(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))), ..ProptestConfig::default() })]
    #[test]
    fn split_partitions_sessions(n in 2usize..30) {
        let s: Vec<_> = (1..=n).map(|k| uwb_session(&format!("walking-{k}"), 2, 0.0)).collect();
        let folds = loso_split(&s).unwrap();
        prop_assert_eq!(folds.len(), n);
        for (i, f) in folds.iter().enumerate() {
            prop_assert_eq!(f.test, i);
            prop_assert_eq!(f.train.len(), n - 1);
            let mut all: Vec<usize> = f.train.clone();
            all.push(f.test);
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ks_statistic_matches_brute_force(
        a in prop::collection::vec(0u8..12, 1..60),
        b in prop::collection::vec(0u8..12, 1..60),
        scale in 0.01f64..10.0,
    ) {
        let a: Vec<f64> = a.iter().map(|v| *v as f64 * scale).collect();
        let b: Vec<f64> = b.iter().map(|v| *v as f64 * scale).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        prop_assert_eq!(r.d, brute_d(&a, &b));
        prop_assert_eq!(r.d, ks_two_sample(&b, &a).unwrap().d);
        prop_assert!((0.0..=1.0).contains(&r.d) && (0.0..=1.0).contains(&r.p));
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().d, 0.0);
    }

    #[test]
    fn ks_p_falls_as_d_grows(n in 5usize..200, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let lo = d1.min(d2);
        let hi = d1.max(d2);
        let a: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let shift = |d: f64| a.iter().map(|v| v + d).collect::<Vec<_>>();
        let p_lo = ks_two_sample(&a, &shift(lo)).unwrap().p;
        let p_hi = ks_two_sample(&a, &shift(hi)).unwrap().p;
        prop_assert!(p_hi <= p_lo + 1e-12);
    }

    #[test]
    fn report_reduction_identity(
        errs in prop::collection::vec((0.001f64..5.0, 0.0f64..5.0), 1..50),
    ) {
        let run = CvRun {
            folds: vec![FoldResult {
                held_out: "trolley-1".into(),
                scenario: Scenario::Trolley,
                baseline_errors: errs.iter().map(|e| e.0).collect(),
                icon_errors: errs.iter().map(|e| e.1).collect(),
            }],
            failures: vec![],
        };
        let r = make_report(Technology::Uwb, &run).unwrap();
        let m = r.combined;
        prop_assert_eq!(m.reduction(), Some(1.0 - m.icon_mean / m.baseline_mean));
        prop_assert_eq!(r.scenarios.len(), 1);
        prop_assert_eq!(r.scenarios[0].1, m);
    }

    #[test]
    fn significant_digit_rendering_is_stable(v in prop::num::f64::NORMAL | prop::num::f64::ZERO, digits in 1usize..16) {
        let s = sig(v, digits);
        prop_assert!(!s.contains('e'));
        let back: f64 = s.parse().unwrap();
        prop_assert_eq!(sig(back, digits), s.clone());
        if v != 0.0 {
            prop_assert!(((back - v) / v).abs() <= 0.5 * 10f64.powi(1 - digits as i32) + 4.0 * f64::EPSILON);
        }
    }
}
