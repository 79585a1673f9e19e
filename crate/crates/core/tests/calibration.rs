use icon_core::calibration::*;
use icon_core::domain::{Scenario, Technology};
use icon_core::simulator::{gen_session, NoiseProfile, Testbed};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(n: usize, d: usize, seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    Problem::new(&x, &y)
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

/// Smooth nonlinear target of three inputs.
fn smooth_target(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), 2, |r, c| {
        let (a, b, d) = (x[(r, 0)], x[(r, 1)], x[(r, 2)]);
        if c == 0 {
            (1.3 * a).sin() + 0.5 * b * d
        } else {
            (0.7 * b).cos() - 0.4 * a * a + 0.2 * d
        }
    })
}

/// Training RMSE in target units, pooled over both outputs.
fn rmse(fit: &Fit, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let p = Problem::new(&fit.input.apply_rows(x), &fit.output.apply_rows(y));
    let r = p.residuals(&fit.params);
    let sse: f64 = r
        .column_iter()
        .enumerate()
        .map(|(o, col)| {
            let scale = 0.5 * (fit.output.max[o] - fit.output.min[o]);
            col.norm_squared() * scale * scale
        })
        .sum();
    (sse / (2 * x.nrows()) as f64).sqrt()
}

#[test]
fn gradient_matches_central_differences() {
    let p = random_problem(60, 4, 1);
    let (alpha, beta) = (0.3, 2.0);
    let objective = |t: &DVector<f64>| beta * p.sse(t) + alpha * t.norm_squared();
    for seed in 0..5 {
        let theta = initial_params(4, 100 + seed) * 3.0;
        let (_, jte, _) = p.gauss_newton(&theta);
        let analytic = (jte * beta + &theta * alpha) * 2.0;
        let h = 1e-6;
        let numeric = DVector::from_fn(theta.len(), |k, _| {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += h;
            b[k] -= h;
            (objective(&a) - objective(&b)) / (2.0 * h)
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "point {seed}: relative error {e:e}");
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let p = random_problem(30, 3, 2);
    let theta = initial_params(3, 7) * 2.0;
    let jac = p.jacobian(&theta);
    let h = 1e-6;
    let flat = |t: &DVector<f64>| {
        let r = p.residuals(t);
        DVector::from_iterator(r.len(), r.row_iter().flat_map(|row| row.iter().copied().collect::<Vec<_>>()))
    };
    for k in 0..theta.len() {
        let mut a = theta.clone();
        let mut b = theta.clone();
        a[k] += h;
        b[k] -= h;
        let numeric = (flat(&a) - flat(&b)) / (2.0 * h);
        let analytic = jac.column(k).into_owned();
        if analytic.norm() > 1e-8 {
            assert!(rel_err(&analytic, &numeric) < 1e-5, "column {k}");
        }
    }
    // the product form agrees with the explicit Jacobian
    let (g, jte, sse) = p.gauss_newton(&theta);
    let e = flat(&theta);
    assert!(rel_err(&(jac.transpose() * &e), &jte) < 1e-12);
    assert!((sse - e.norm_squared()).abs() < 1e-12 * sse);
    let jtj = jac.transpose() * &jac;
    assert!((&g - &jtj).norm() / jtj.norm() < 1e-5);
}

#[test]
fn objective_never_rises_on_accepted_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(150, 3, |_, _| rng.random_range(-2.0..2.0));
    let y = smooth_target(&x).map(|v| v + rng.random_range(-0.1..0.1));
    let fit = fit_matrices(&x, &y, &TrainConfig { max_epochs: 80, ..TrainConfig::default() }).unwrap();
    assert!(!fit.log.epochs.is_empty());
    for e in &fit.log.epochs {
        assert!(e.f_after <= e.f_before, "epoch {}: {} -> {}", e.epoch, e.f_before, e.f_after);
    }
}

#[test]
fn noiseless_regression_is_fitted() {
    let n = 200;
    let x = DMatrix::from_fn(n, 1, |r, _| -1.0 + 2.0 * r as f64 / (n - 1) as f64);
    let y = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 2.0 * x[(r, 0)] } else { -x[(r, 0)] });
    let fit = fit_matrices(&x, &y, &TrainConfig::default()).unwrap();
    let e = rmse(&fit, &x, &y);
    println!("linear map: training RMSE {e:e}");
    assert!(e < 1e-3);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = DMatrix::from_fn(300, 3, |_, _| rng.random_range(-1.0..1.0));
    let y = smooth_target(&x);
    let fit = fit_matrices(&x, &y, &TrainConfig::default()).unwrap();
    let e = rmse(&fit, &x, &y);
    println!("smooth map: training RMSE {e:e}");
    assert!(e < 1e-3);
}

#[test]
fn noise_targets_keep_few_effective_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(300, 4, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(300, 2, |_, _| rng.random_range(-1.0..1.0));
    let fit = fit_matrices(&x, &y, &TrainConfig { max_epochs: 100, ..TrainConfig::default() }).unwrap();
    let nw = fit.params.len() as f64;
    assert!(fit.gamma < 0.5 * nw, "gamma {} of {nw}", fit.gamma);
}

#[test]
fn sample_order_does_not_change_the_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0));
    let y = smooth_target(&x).map(|v| v + rng.random_range(-0.05..0.05));
    let cfg = TrainConfig::default();
    let base = rmse(&fit_matrices(&x, &y, &cfg).unwrap(), &x, &y);
    for seed in 0..3 {
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let xs = x.select_rows(&order);
        let ys = y.select_rows(&order);
        let e = rmse(&fit_matrices(&xs, &ys, &cfg).unwrap(), &xs, &ys);
        println!("permutation {seed}: RMSE {e:.9} vs {base:.9}");
        assert!((e - base).abs() <= 1e-6, "permutation {seed}: {e} vs {base}");
    }
}

#[test]
fn duplicated_data_trains_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = DMatrix::from_fn(80, 3, |_, _| rng.random_range(-1.0..1.0));
    let x = DMatrix::from_fn(160, 3, |r, c| x[(r % 80, c)]);
    let y = smooth_target(&x);
    let cfg = TrainConfig { max_epochs: 40, ..TrainConfig::default() };
    let a = fit_matrices(&x, &y, &cfg).unwrap();
    let b = fit_matrices(&x, &y, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
}

#[test]
fn reused_buffers_match_fresh_ones() {
    let big = random_problem(700, 5, 7);
    let small = random_problem(20, 5, 8);
    let mut sc = Scratch::default();
    let mut g = DMatrix::zeros(0, 0);
    for seed in 0..4 {
        let theta = initial_params(5, seed);
        for p in [&big, &small, &big] {
            assert_eq!(p.sse_in(&theta, &mut sc), p.sse(&theta));
            let (grad, sse) = p.gauss_newton_in(&theta, &mut sc, &mut g);
            let (g_fresh, grad_fresh, sse_fresh) = p.gauss_newton(&theta);
            assert_eq!((grad, sse), (grad_fresh, sse_fresh));
            assert_eq!(g, g_fresh);
        }
    }
}

#[test]
fn calibrated_sessions_are_smoothed_model_outputs() {
    let bed = {
        let mut b = Testbed::new(Technology::Uwb);
        b.duration_s = Some(20.0);
        b
    };
    let s = gen_session(Scenario::Walking, 1, &NoiseProfile::default(), &bed).unwrap();
    let (model, _) = train(&training_samples(&[&s]).unwrap(), &TrainConfig { max_epochs: 20, ..TrainConfig::default() }).unwrap();
    let raw = calibrate_session(&model, &s, 1).unwrap();
    let smooth = calibrate_session(&model, &s, 5).unwrap();
    assert_eq!(raw.len(), s.len());
    assert_eq!(smooth.len(), s.len());
    let feats = session_features(&s);
    for (f, r) in feats.iter().zip(&raw) {
        assert_eq!(model.forward(f).unwrap(), *r);
    }
    // smoothing never increases the spread of successive outputs
    let var = |v: &[icon_core::geometry::Point2]| {
        v.windows(2).map(|w| w[0].distance(&w[1]).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    assert!(var(&smooth) <= var(&raw));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))), ..ProptestConfig::default() })]
    #[test]
    fn forward_is_pure(seed in any::<u64>(), values in prop::collection::vec(-100.0f64..100.0, 12)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo: Vec<f64> = (0..12).map(|_| rng.random_range(-50.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(1.0..50.0)).collect();
        let input = Normalizer { min: lo, max: hi };
        let output = Normalizer { min: vec![0.0, 0.0], max: vec![5.0, 5.0] };
        let mut m = CalibModel::zeros(Technology::Uwb, input, output);
        m.set_params(&initial_params(12, seed));
        let f = FeatureVector::new(Technology::Uwb, values).unwrap();
        let a = m.forward(&f).unwrap();
        let b = m.clone().forward(&f.clone()).unwrap();
        prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
        prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
    }
}
