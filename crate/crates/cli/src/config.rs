//! Run configuration: a TOML file whose every key is optional, overridable
//! from the command line, and written back out as the dataset manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use icon_core::calibration::TrainConfig;
use icon_core::domain::{Scenario, Technology};
use icon_core::evaluation::CvConfig;
use icon_core::geometry::Area;
use icon_core::simulator::{NoiseProfile, Testbed};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tech: String,
    pub scenarios: Vec<String>,
    pub sessions_per_scenario: usize,
    /// Trailing moving-average window for baseline and ICON tracks.
    pub window: usize,
    /// Not part of the manifest: a rerun may write elsewhere.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub seeds: Seeds,
    pub layout: LayoutConfig,
    pub noise: NoiseConfig,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub simulation: u64,
    pub training: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub width_m: f64,
    pub height_m: f64,
    /// Session length; the technology's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub rssi_sigma: f64,
    pub aoa_sigma: f64,
    pub multipath_ghost_prob: f64,
    pub ghost_offset_sigma: f64,
    pub ghost_gain: f64,
    pub iq_noise_sigma: f64,
    pub ranging_sigma: f64,
    pub nlos_bias_max: f64,
    pub nlos_prob: f64,
    pub cir_sigma: f64,
    pub psa_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub min_grad: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        Self {
            tech: Technology::Uwb.to_string(),
            scenarios: Scenario::ALL.iter().map(ToString::to_string).collect(),
            sessions_per_scenario: 5,
            window: cv.window,
            output_dir: None,
            seeds: Seeds::default(),
            layout: LayoutConfig::default(),
            noise: NoiseConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self { simulation: NoiseProfile::default().rng_seed, training: TrainConfig::default().seed }
    }
}

impl Default for LayoutConfig {
    fn default() -> Self {
        let a = Area::default();
        Self { width_m: a.width(), height_m: a.height(), duration_s: None }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let p = NoiseProfile::default();
        Self {
            rssi_sigma: p.rssi_sigma,
            aoa_sigma: p.aoa_sigma,
            multipath_ghost_prob: p.multipath_ghost_prob,
            ghost_offset_sigma: p.ghost_offset_sigma,
            ghost_gain: p.ghost_gain,
            iq_noise_sigma: p.iq_noise_sigma,
            ranging_sigma: p.ranging_sigma,
            nlos_bias_max: p.nlos_bias_max,
            nlos_prob: p.nlos_prob,
            cir_sigma: p.cir_sigma,
            psa_sigma: p.psa_sigma,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
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
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { max_epochs: t.max_epochs, mu_init: t.mu_init, mu_factor: t.mu_factor, mu_max: t.mu_max, min_grad: t.min_grad }
    }
}

/// A configuration checked against every downstream precondition.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub tech: Technology,
    pub scenarios: Vec<Scenario>,
    pub sessions_per_scenario: usize,
    pub profile: NoiseProfile,
    pub testbed: Testbed,
    pub cv: CvConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            max_epochs: t.max_epochs,
            mu_init: t.mu_init,
            mu_factor: t.mu_factor,
            mu_max: t.mu_max,
            min_grad: t.min_grad,
            seed: self.seeds.training,
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let tech: Technology = self.tech.parse().map_err(|e| CliError::Config(format!("tech: {e}")))?;
        let mut scenarios = Vec::new();
        for s in &self.scenarios {
            let s: Scenario = s.parse().map_err(|e| CliError::Config(format!("scenarios: {e}")))?;
            if scenarios.contains(&s) {
                return Err(CliError::Config(format!("scenario {s} listed twice")));
            }
            scenarios.push(s);
        }
        if scenarios.is_empty() {
            return Err(CliError::Config("no scenarios selected".into()));
        }
        if self.sessions_per_scenario < 2 {
            return Err(CliError::Config(format!(
                "sessions_per_scenario must be at least 2, got {}",
                self.sessions_per_scenario
            )));
        }
        if self.window == 0 {
            return Err(CliError::Config("window must be at least 1".into()));
        }
        let l = &self.layout;
        let area = Area::with_size(l.width_m, l.height_m);
        if area.is_empty() || !area.diagonal().is_finite() {
            return Err(CliError::Config(format!("layout {} m × {} m is empty", l.width_m, l.height_m)));
        }
        if let Some(d) = l.duration_s {
            if !(d.is_finite() && d >= 1.0) {
                return Err(CliError::Config(format!("duration_s must be at least 1 s, got {d}")));
            }
        }
        let n = &self.noise;
        let profile = NoiseProfile {
            rssi_sigma: n.rssi_sigma,
            aoa_sigma: n.aoa_sigma,
            multipath_ghost_prob: n.multipath_ghost_prob,
            ghost_offset_sigma: n.ghost_offset_sigma,
            ghost_gain: n.ghost_gain,
            iq_noise_sigma: n.iq_noise_sigma,
            ranging_sigma: n.ranging_sigma,
            nlos_bias_max: n.nlos_bias_max,
            nlos_prob: n.nlos_prob,
            cir_sigma: n.cir_sigma,
            psa_sigma: n.psa_sigma,
            rng_seed: self.seeds.simulation,
        };
        profile.validate()?;
        let train = self.train_config();
        train.validate()?;
        let mut testbed = Testbed::with_area(tech, area);
        testbed.duration_s = l.duration_s;
        Ok(Resolved {
            tech,
            scenarios,
            sessions_per_scenario: self.sessions_per_scenario,
            profile,
            testbed,
            cv: CvConfig { train, window: self.window },
        })
    }
}
