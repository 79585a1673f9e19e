//! The calibration network: features, model, training and inference.
//!
//! A single hidden layer of [`HIDDEN_UNITS`] tanh units maps one record's
//! raw measurements to a planar position. Inputs and outputs are min–max
//! normalized to `[-1, 1]` using training data only.

mod gemm;
mod linalg;
mod model;
mod network;
mod train;

pub use linalg::{cholesky_in_place, cholesky_solve, trace_of_inverse};
pub use model::{CalibModel, Normalizer};
pub use network::{Problem, Scratch};
pub use train::{fit_matrices, initial_params, train, EpochLog, Fit, StopReason, TrainConfig, TrainLog};

use crate::domain::{BleRecord, Records, Session, Technology, UwbRecord};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::smoothing::moving_average;

pub const HIDDEN_UNITS: usize = 50;
pub const OUTPUTS: usize = 2;

/// Measurements of one record in the order the network sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub technology: Technology,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(technology: Technology, values: Vec<f64>) -> Result<Self> {
        if values.len() != technology.feature_dim() {
            return Err(Error::DimensionMismatch { expected: technology.feature_dim(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature vector has non-finite entries".into()));
        }
        Ok(Self { technology, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A record that can feed the calibration network.
pub trait Measurement {
    fn features(&self) -> FeatureVector;
    fn truth(&self) -> Point2;
}

impl Measurement for BleRecord {
    /// `[rssi1..rssi8, aoa1..aoa8]`, AoA in raw degrees.
    fn features(&self) -> FeatureVector {
        let values = self.rssi.iter().chain(&self.aoa).copied().collect();
        FeatureVector { technology: Technology::Ble, values }
    }

    fn truth(&self) -> Point2 {
        self.truth
    }
}

impl Measurement for UwbRecord {
    /// `[cir1..cir4, psa1..psa4, d1..d4]`.
    fn features(&self) -> FeatureVector {
        let values = self
            .cir
            .iter()
            .copied()
            .chain(self.psa.iter().map(|p| *p as f64))
            .chain(self.dist.iter().copied())
            .collect();
        FeatureVector { technology: Technology::Uwb, values }
    }

    fn truth(&self) -> Point2 {
        self.truth
    }
}

pub fn assemble_features<M: Measurement>(record: &M) -> FeatureVector {
    record.features()
}

/// Feature vectors of every record in a session, in time order.
pub fn session_features(session: &Session) -> Vec<FeatureVector> {
    match session.records() {
        Records::Ble(r) => r.iter().map(Measurement::features).collect(),
        Records::Uwb(r) => r.iter().map(Measurement::features).collect(),
    }
}

/// `(features, truth)` pairs pooled over sessions.
pub fn training_samples(sessions: &[&Session]) -> Result<Vec<(FeatureVector, Point2)>> {
    let Some(first) = sessions.first() else {
        return Err(Error::EmptySample);
    };
    let tech = first.technology();
    let mut out = Vec::new();
    for s in sessions {
        if s.technology() != tech {
            return Err(Error::InvalidInput(format!("session {} is {} but {tech} was expected", s.id, s.technology())));
        }
        out.extend(session_features(s).into_iter().zip(s.records().truths()));
    }
    Ok(out)
}

/// Runs the model over a session and smooths the output track with a
/// trailing moving average of `window` samples.
pub fn calibrate_session(model: &CalibModel, session: &Session, window: usize) -> Result<Vec<Point2>> {
    if session.technology() != model.technology {
        return Err(Error::InvalidInput(format!(
            "model is for {} but session {} is {}",
            model.technology,
            session.id,
            session.technology()
        )));
    }
    let raw = session_features(session).iter().map(|f| model.forward(f)).collect::<Result<Vec<_>>>()?;
    moving_average(&raw, window)
}
