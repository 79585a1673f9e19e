//! Simulation, baseline localisation and neural calibration of BLE
//! angle-of-arrival and UWB two-way-ranging indoor positioning.

pub mod aoa;
pub mod calibration;
pub mod domain;
pub mod evaluation;
mod error;
pub mod geometry;
pub mod simulator;
pub mod ranging;
pub mod smoothing;
pub mod tracking;
pub mod triangulation;

pub use error::{Error, Result};
