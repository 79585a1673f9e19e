//! Synthetic BLE-AoA and UWB testbeds.
//!
//! Everything here is a pure function of its inputs and a seed. Per-session
//! seeds are derived from the profile's root seed, so sessions can be
//! generated independently (and in any order) with identical results.

mod ble;
mod trajectory;
mod uwb;

pub use ble::{local_azimuth, synth_ble_record, synth_ble_snapshot, BleRadio};
pub use trajectory::{gen_trajectory, gen_trajectory_with, MotionStyle, Trajectory, MAX_SPEED, SAMPLE_RATE_HZ};
pub use uwb::{synth_uwb_record, UwbLinks, UwbRadio, UwbSample};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aoa::MusicEstimator;
use crate::domain::{AnchorLayout, BleRecord, Records, Scenario, Session, Technology, UwbRecord};
use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};
use crate::ranging::multilaterate;
use crate::tracking::{BleBaselineTracker, TrackerConfig};

/// Channel impairments of a simulated testbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    /// Per-path RSSI noise, dB.
    pub rssi_sigma: f64,
    /// Perturbation of the direct path's azimuth, degrees.
    pub aoa_sigma: f64,
    /// Probability that a BLE snapshot carries a ghost path.
    pub multipath_ghost_prob: f64,
    /// Spread of the ghost azimuth around the true one, degrees.
    pub ghost_offset_sigma: f64,
    /// Ghost amplitude relative to the direct path.
    pub ghost_gain: f64,
    /// Complex white noise per IQ sample, relative to unit signal amplitude.
    pub iq_noise_sigma: f64,
    /// Gaussian ranging noise, m.
    pub ranging_sigma: f64,
    /// Largest positive NLOS ranging bias, m.
    pub nlos_bias_max: f64,
    /// Probability that a UWB link is NLOS.
    pub nlos_prob: f64,
    /// CIR power noise, dB.
    pub cir_sigma: f64,
    /// PSA count noise, symbols.
    pub psa_sigma: f64,
    pub rng_seed: u64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            rssi_sigma: 2.0,
            aoa_sigma: 2.0,
            multipath_ghost_prob: 0.3,
            ghost_offset_sigma: 25.0,
            ghost_gain: 0.7,
            iq_noise_sigma: 0.1,
            ranging_sigma: 0.05,
            nlos_bias_max: 1.0,
            nlos_prob: 0.35,
            cir_sigma: 1.0,
            psa_sigma: 16.0,
            rng_seed: 1,
        }
    }
}

impl NoiseProfile {
    /// Every impairment switched off.
    pub fn noiseless(rng_seed: u64) -> Self {
        Self {
            rssi_sigma: 0.0,
            aoa_sigma: 0.0,
            multipath_ghost_prob: 0.0,
            ghost_offset_sigma: 0.0,
            ghost_gain: 0.0,
            iq_noise_sigma: 0.0,
            ranging_sigma: 0.0,
            nlos_bias_max: 0.0,
            nlos_prob: 0.0,
            cir_sigma: 0.0,
            psa_sigma: 0.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("rssi_sigma", self.rssi_sigma),
            ("aoa_sigma", self.aoa_sigma),
            ("ghost_offset_sigma", self.ghost_offset_sigma),
            ("ghost_gain", self.ghost_gain),
            ("iq_noise_sigma", self.iq_noise_sigma),
            ("ranging_sigma", self.ranging_sigma),
            ("nlos_bias_max", self.nlos_bias_max),
            ("cir_sigma", self.cir_sigma),
            ("psa_sigma", self.psa_sigma),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        for (name, p) in [("multipath_ghost_prob", self.multipath_ghost_prob), ("nlos_prob", self.nlos_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Mixes a root seed with stream indices (splitmix64 finalizer), giving
/// well-separated seeds for neighbouring indices.
pub fn derive_seed(root: u64, indices: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    indices.iter().fold(mix(root), |acc, &i| mix(acc ^ mix(i)))
}

/// Session length of each testbed, seconds.
pub fn session_duration(tech: Technology) -> f64 {
    match tech {
        // ten sessions of "just under 8 minutes" in total
        Technology::Ble => 48.0,
        Technology::Uwb => 90.0,
    }
}

/// Everything besides the noise profile that shapes a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Testbed {
    pub area: Area,
    pub layout: AnchorLayout,
    pub ble: BleRadio,
    pub uwb: UwbRadio,
    pub estimator: MusicEstimator,
    pub tracker: TrackerConfig,
    /// Overrides [`session_duration`] when set.
    pub duration_s: Option<f64>,
}

impl Testbed {
    /// Default 5 m × 5 m room with corner anchors.
    pub fn new(tech: Technology) -> Self {
        Self::with_area(tech, Area::default())
    }

    pub fn with_area(tech: Technology, area: Area) -> Self {
        Self {
            area,
            layout: AnchorLayout::corners(tech, &area),
            ble: BleRadio::default(),
            uwb: UwbRadio::default(),
            estimator: MusicEstimator::default(),
            tracker: TrackerConfig::for_area(&area),
            duration_s: None,
        }
    }

    pub fn technology(&self) -> Technology {
        self.layout.technology
    }
}

/// Generates `sessions_per_scenario` sessions for every listed scenario,
/// ids `"<scenario>-<k>"` with `k` from 1, with baselines filled in by the
/// technology's own pipeline.
pub fn gen_dataset(
    tech: Technology,
    scenarios: &[Scenario],
    sessions_per_scenario: usize,
    profile: &NoiseProfile,
    testbed: &Testbed,
) -> Result<Vec<Session>> {
    if testbed.technology() != tech {
        return Err(Error::InvalidInput(format!(
            "layout is {} but a {tech} dataset was requested",
            testbed.technology()
        )));
    }
    if sessions_per_scenario < 2 {
        return Err(Error::NotEnoughSessions { needed: 2, got: sessions_per_scenario });
    }
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios requested".into()));
    }
    profile.validate()?;
    testbed.layout.validate()?;
    let mut out = Vec::with_capacity(scenarios.len() * sessions_per_scenario);
    for &scenario in scenarios {
        for k in 1..=sessions_per_scenario {
            out.push(gen_session(scenario, k, profile, testbed)?);
        }
    }
    Ok(out)
}

/// One session; depends only on `(scenario, index, profile, testbed)`.
pub fn gen_session(scenario: Scenario, index: usize, profile: &NoiseProfile, testbed: &Testbed) -> Result<Session> {
    let tech = testbed.technology();
    let scenario_tag = match scenario {
        Scenario::Walking => 1,
        Scenario::Trolley => 2,
    };
    let base = derive_seed(profile.rng_seed, &[tech as u64, scenario_tag, index as u64]);
    let duration = testbed.duration_s.unwrap_or_else(|| session_duration(tech));
    let trajectory = gen_trajectory(scenario, duration, &testbed.area, derive_seed(base, &[0]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, &[1]));
    let id = format!("{scenario}-{index}");
    let records = match tech {
        Technology::Uwb => Records::Uwb(uwb_records(&trajectory, profile, testbed, &mut rng)?),
        Technology::Ble => Records::Ble(ble_records(&trajectory, profile, testbed, &mut rng)?),
    };
    Session::new(id, scenario, records)
}

fn uwb_records(
    trajectory: &Trajectory,
    profile: &NoiseProfile,
    testbed: &Testbed,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<UwbRecord>> {
    let anchors = testbed.layout.positions();
    let walking = trajectory.scenario == Scenario::Walking;
    let mut links = UwbLinks::default();
    trajectory
        .points
        .iter()
        .enumerate()
        .map(|(k, &(t, truth))| {
            let heading = if walking { trajectory.heading_deg(k) } else { None };
            let s = synth_uwb_record(truth, heading, &testbed.layout, &testbed.uwb, profile, &mut links, rng)?;
            let fix = multilaterate(&anchors, &s.dist, testbed.uwb.target_height)?;
            Ok(UwbRecord { timestamp: t, cir: s.cir, psa: s.psa, dist: s.dist, baseline: fix.position, truth })
        })
        .collect()
}

fn ble_records(
    trajectory: &Trajectory,
    profile: &NoiseProfile,
    testbed: &Testbed,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BleRecord>> {
    let mut tracker = BleBaselineTracker::new(testbed.layout.clone(), testbed.tracker)?;
    let mut out = Vec::with_capacity(trajectory.points.len());
    for &(t, truth) in &trajectory.points {
        // AoA failures drop the record, nothing else
        let Ok(mut rec) = synth_ble_record(truth, &testbed.layout, &testbed.ble, profile, &testbed.estimator, rng)
        else {
            continue;
        };
        rec.timestamp = t;
        rec.baseline = tracker.step(t, &rec.aoa)?;
        out.push(rec);
    }
    Ok(out)
}

/// Baseline of a run with every record paired to its truth, for quick
/// error summaries.
pub fn baseline_errors(session: &Session) -> Vec<f64> {
    let r = session.records();
    r.baselines().iter().zip(r.truths()).map(|(b, t): (&Point2, Point2)| b.distance(&t)).collect()
}
