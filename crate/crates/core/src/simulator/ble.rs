//! Constant-tone IQ capture on a circular array, plus per-path RSSI.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NoiseProfile;
use crate::aoa::{ArrayGeometry, IqSnapshot, MusicEstimator, C64, SAMPLES_PER_STREAM};
use crate::domain::{Anchor, AnchorLayout, BleRecord, Technology, BLE_CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleRadio {
    pub array: ArrayGeometry,
    /// Direct-path amplitude of the tone.
    pub amplitude: f64,
    /// RSSI at 1 m, dBm.
    pub rssi_at_1m: f64,
    pub path_loss_exponent: f64,
    pub target_height: f64,
    /// Largest residual carrier offset, radians per kept sample.
    pub max_phase_drift: f64,
}

impl Default for BleRadio {
    fn default() -> Self {
        Self {
            array: ArrayGeometry::default(),
            amplitude: 1.0,
            rssi_at_1m: -40.0,
            path_loss_exponent: 2.0,
            target_height: 1.0,
            max_phase_drift: 0.3,
        }
    }
}

impl BleRadio {
    /// Mean received power at 3D distance `d`, dBm.
    pub fn path_loss_rssi(&self, d: f64) -> f64 {
        self.rssi_at_1m - 10.0 * self.path_loss_exponent * d.max(1e-3).log10()
    }
}

/// Azimuth of `truth` as seen by the anchor, in the array's own frame.
pub fn local_azimuth(truth: Point2, anchor: &Anchor) -> f64 {
    let d = truth - anchor.position.xy();
    wrap_deg(d.y.atan2(d.x).to_degrees() - anchor.orientation_deg)
}

/// One constant-tone extension as received by `anchor`.
///
/// The direct path arrives from the true local azimuth (perturbed by
/// `aoa_sigma`); a coherent ghost with a random phase is added with
/// probability `multipath_ghost_prob`; every sample then gets circular
/// complex Gaussian noise of standard deviation `iq_noise_sigma`.
pub fn synth_ble_snapshot<R: Rng>(
    truth: Point2,
    anchor: &Anchor,
    radio: &BleRadio,
    profile: &NoiseProfile,
    rng: &mut R,
) -> IqSnapshot {
    let true_az = local_azimuth(truth, anchor);
    let direct_az = true_az + gaussian(rng, profile.aoa_sigma);
    let mut paths = vec![(radio.array.steering_vector(direct_az), C64::from_polar(radio.amplitude, rng.random_range(0.0..2.0 * PI)))];
    if rng.random_bool(profile.multipath_ghost_prob) {
        let ghost_az = true_az + gaussian(rng, profile.ghost_offset_sigma);
        let gain = radio.amplitude * profile.ghost_gain;
        paths.push((radio.array.steering_vector(ghost_az), C64::from_polar(gain, rng.random_range(0.0..2.0 * PI))));
    }
    let drift = if radio.max_phase_drift > 0.0 {
        rng.random_range(-radio.max_phase_drift..radio.max_phase_drift)
    } else {
        0.0
    };
    let noise = profile.iq_noise_sigma / 2f64.sqrt();
    let streams = std::array::from_fn(|m| {
        (0..SAMPLES_PER_STREAM)
            .map(|n| {
                // residual carrier offset after synchronisation: common to all antennas
                let tone = C64::from_polar(1.0, drift * n as f64);
                let clean: C64 = paths.iter().map(|(a, g)| a[m] * g * tone).sum();
                clean + C64::new(gaussian(rng, noise), gaussian(rng, noise))
            })
            .collect()
    });
    IqSnapshot { streams }
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// A BLE record for the target at `truth`. Timestamp and baseline are left
/// at zero for the caller to fill.
///
/// Fails when any locator's MUSIC spectrum is degenerate; the caller drops
/// the record.
pub fn synth_ble_record<R: Rng>(
    truth: Point2,
    layout: &AnchorLayout,
    radio: &BleRadio,
    profile: &NoiseProfile,
    estimator: &MusicEstimator,
    rng: &mut R,
) -> Result<BleRecord> {
    if layout.technology != Technology::Ble || layout.anchors.len() * 2 != BLE_CHANNELS {
        return Err(Error::InvalidInput("BLE records need a BLE layout with 4 locators".into()));
    }
    let mut rssi = [0.0; BLE_CHANNELS];
    let mut aoa = [0.0; BLE_CHANNELS];
    for (i, anchor) in layout.anchors.iter().enumerate() {
        let d = anchor.position.distance(&truth.at_height(radio.target_height));
        let mean = radio.path_loss_rssi(d);
        rssi[2 * i] = mean + gaussian(rng, profile.rssi_sigma);
        rssi[2 * i + 1] = mean + gaussian(rng, profile.rssi_sigma);
        let snapshot = synth_ble_snapshot(truth, anchor, radio, profile, rng);
        let paths = estimator.estimate_paths(&snapshot)?;
        aoa[2 * i] = paths[0];
        aoa[2 * i + 1] = paths[1];
    }
    Ok(BleRecord { timestamp: 0.0, rssi, aoa, baseline: Point2::default(), truth })
}
