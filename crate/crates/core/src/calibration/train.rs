//! Levenberg–Marquardt training with Bayesian regularization.
//!
//! Minimizes `F = β·E_D + α·E_W` (squared residuals and squared weights).
//! After every accepted step the evidence framework re-estimates the
//! effective number of parameters `γ = N_w − α·tr((βJᵀJ + αI)⁻¹)` and the
//! hyperparameters `α = γ / 2E_W`, `β = (2N − γ) / 2E_D`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{cholesky_in_place, cholesky_solve, trace_of_inverse_in};
use super::network::{Problem, Scratch};
use super::{CalibModel, FeatureVector, Normalizer, HIDDEN_UNITS, OUTPUTS};
use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub mu_init: f64,
    /// Damping multiplier after a rejected step; its inverse is applied
    /// after an accepted one.
    pub mu_factor: f64,
    pub mu_max: f64,
    /// Stop once the gradient norm of `F` drops below this.
    pub min_grad: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 300, mu_init: 1e-3, mu_factor: 10.0, mu_max: 1e10, min_grad: 1e-7, seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_epochs > 0
            && self.mu_init > 0.0
            && self.mu_factor > 1.0
            && self.mu_max > self.mu_init
            && self.min_grad >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    MinGradient,
    MaxMu,
}

/// One accepted step. `f_before` and `f_after` use the same `α, β` (the
/// ones in force during the step); `alpha`, `beta`, `gamma` are the
/// re-estimated values afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub f_before: f64,
    pub f_after: f64,
    pub e_d: f64,
    pub e_w: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stop: StopReason,
}

/// Result of fitting on raw (un-normalized) matrices.
#[derive(Debug, Clone)]
pub struct Fit {
    pub params: DVector<f64>,
    pub input: Normalizer,
    pub output: Normalizer,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub log: TrainLog,
}

/// Trains a calibration model on `(features, truth)` pairs.
pub fn train(data: &[(FeatureVector, Point2)], cfg: &TrainConfig) -> Result<(CalibModel, TrainLog)> {
    let Some((first, _)) = data.first() else {
        return Err(Error::EmptySample);
    };
    let tech = first.technology;
    let d = tech.feature_dim();
    if let Some((f, _)) = data.iter().find(|(f, _)| f.technology != tech || f.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: f.len() });
    }
    let x = DMatrix::from_fn(data.len(), d, |r, c| data[r].0.values[c]);
    let y = DMatrix::from_fn(data.len(), OUTPUTS, |r, c| if c == 0 { data[r].1.x } else { data[r].1.y });
    let fit = fit_matrices(&x, &y, cfg)?;
    let mut model = CalibModel::zeros(tech, fit.input.clone(), fit.output.clone());
    model.set_params(&fit.params);
    model.alpha = fit.alpha;
    model.beta = fit.beta;
    model.gamma = fit.gamma;
    Ok((model, fit.log))
}

/// Uniform `±1/√fan_in` initialization in parameter-vector order.
pub fn initial_params(d: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = 1.0 / (d as f64).sqrt();
    let out = 1.0 / (HIDDEN_UNITS as f64).sqrt();
    let n_hidden = HIDDEN_UNITS * (d + 1);
    let n = n_hidden + OUTPUTS * (HIDDEN_UNITS + 1);
    DVector::from_fn(n, |k, _| {
        let r = if k < n_hidden { hidden } else { out };
        rng.random_range(-r..=r)
    })
}

/// Trains on an `N × d` input matrix and `N × 2` targets.
pub fn fit_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainConfig) -> Result<Fit> {
    cfg.validate()?;
    let (n, d) = (x.nrows(), x.ncols());
    if y.nrows() != n || y.ncols() != OUTPUTS {
        return Err(Error::DimensionMismatch { expected: n, got: y.nrows() });
    }
    if n < d + 1 {
        return Err(Error::Training(format!("{n} samples cannot train a network with {d} inputs")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Training("training data contains non-finite values".into()));
    }
    let input = Normalizer::fit(x);
    let output = Normalizer::fit(y);
    let problem = Problem::new(&input.apply_rows(x), &output.apply_rows(y));

    let mut theta = initial_params(d, cfg.seed);
    let (alpha, beta, gamma, log) = levenberg_marquardt(&problem, &mut theta, cfg)?;
    Ok(Fit { params: theta, input, output, alpha, beta, gamma, log })
}

fn levenberg_marquardt(
    problem: &Problem,
    theta: &mut DVector<f64>,
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64, TrainLog)> {
    let nw = theta.len() as f64;
    let n_err = (OUTPUTS * problem.num_samples()) as f64;
    let mut e_d = problem.sse(theta);
    let mut e_w = theta.norm_squared();
    let mut gamma = nw;
    let mut beta = if n_err - gamma > 0.0 && e_d > 0.0 { (n_err - gamma) / (2.0 * e_d) } else { 1.0 };
    let mut alpha = gamma / (2.0 * e_w.max(f64::MIN_POSITIVE));
    let mut mu = cfg.mu_init;
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut scratch = Scratch::default();
    let mut a = DMatrix::zeros(0, 0);
    let mut jtj = DMatrix::zeros(0, 0);
    let mut inverse = DMatrix::zeros(0, 0);

    for epoch in 1..=cfg.max_epochs {
        let (jte, sse) = problem.gauss_newton_in(theta, &mut scratch, &mut jtj);
        e_d = sse;
        let f = beta * e_d + alpha * e_w;
        if !f.is_finite() {
            return Err(Error::Training(format!("objective became non-finite at epoch {epoch}")));
        }
        let grad = (&jte * beta + &*theta * alpha) * 2.0;
        let grad_norm = grad.norm();
        if grad_norm < cfg.min_grad {
            stop = StopReason::MinGradient;
            break;
        }

        // Work with the system divided by β: (JᵀJ + λI)Δ = −(Jᵀe + (α/β)θ).
        let rhs = -(&jte + &*theta * (alpha / beta));
        let accepted = loop {
            if a.shape() == jtj.shape() {
                a.copy_from(&jtj);
            } else {
                a = jtj.clone();
            }
            a.set_diagonal(&(jtj.diagonal().add_scalar((alpha + mu) / beta)));
            if cholesky_in_place(&mut a) {
                let step = cholesky_solve(&a, &rhs);
                let trial = &*theta + step;
                let e_d_new = problem.sse_in(&trial, &mut scratch);
                let e_w_new = trial.norm_squared();
                let f_new = beta * e_d_new + alpha * e_w_new;
                if f_new.is_nan() {
                    return Err(Error::Training(format!("objective became NaN at epoch {epoch}")));
                }
                if f_new < f {
                    *theta = trial;
                    e_d = e_d_new;
                    e_w = e_w_new;
                    break Some(f_new);
                }
            }
            mu *= cfg.mu_factor;
            if mu > cfg.mu_max {
                break None;
            }
        };
        let Some(f_after) = accepted else {
            if epochs.is_empty() && !jtj.iter().all(|v| v.is_finite()) {
                return Err(Error::Training("singular LM system at maximum damping".into()));
            }
            stop = StopReason::MaxMu;
            break;
        };
        let mu_step = mu;
        mu = (mu / cfg.mu_factor).max(f64::MIN_POSITIVE);

        // evidence update around the Gauss–Newton Hessian of this epoch
        // The accepted trial already factored this matrix once the damping
        // no longer changes the diagonal.
        let factored = if (alpha + mu_step) / beta == alpha / beta {
            true
        } else {
            a.copy_from(&jtj);
            a.set_diagonal(&jtj.diagonal().add_scalar(alpha / beta));
            cholesky_in_place(&mut a)
        };
        let h = &a;
        if factored {
            // tr((βJᵀJ + αI)⁻¹) = tr((JᵀJ + (α/β)I)⁻¹) / β
            gamma = (nw - alpha * trace_of_inverse_in(h, &mut inverse) / beta).clamp(0.0, nw);
        }
        alpha = gamma.max(f64::MIN_POSITIVE) / (2.0 * e_w.max(f64::MIN_POSITIVE));
        beta = (n_err - gamma).max(1.0) / (2.0 * e_d.max(f64::MIN_POSITIVE));

        epochs.push(EpochLog { epoch, f_before: f, f_after, e_d, e_w, alpha, beta, gamma, mu: mu_step, grad_norm });
    }
    Ok((alpha, beta, gamma, TrainLog { epochs, stop }))
}
