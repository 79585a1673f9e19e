//! Testbed layouts, measurement records and recording sessions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, Area, Point2, Point3};

/// Radio technology of a testbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technology {
    Ble,
    Uwb,
}

impl Technology {
    /// Length of the calibration feature vector for this technology.
    pub fn feature_dim(self) -> usize {
        match self {
            Technology::Ble => 16,
            Technology::Uwb => 12,
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Technology::Ble => "ble",
            Technology::Uwb => "uwb",
        })
    }
}

impl FromStr for Technology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ble" => Ok(Technology::Ble),
            "uwb" => Ok(Technology::Uwb),
            other => Err(Error::InvalidInput(format!("unknown technology `{other}`"))),
        }
    }
}

/// How the target moves during a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Carried by a person.
    Walking,
    /// Riding a remote-controlled trolley.
    Trolley,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Walking, Scenario::Trolley];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Scenario::Walking => "walking",
            Scenario::Trolley => "trolley",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "walking" | "walk" => Ok(Scenario::Walking),
            "trolley" => Ok(Scenario::Trolley),
            other => Err(Error::InvalidInput(format!("unknown scenario `{other}`"))),
        }
    }
}

/// A fixed locator or ranging anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub id: u32,
    pub position: Point3,
    /// Azimuth (global frame) of the antenna array's 0° reference. Only
    /// meaningful for BLE locators; AoA is reported relative to it.
    pub orientation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLayout {
    pub technology: Technology,
    pub anchors: Vec<Anchor>,
}

/// Anchor mounting height used by the default layouts.
pub const DEFAULT_ANCHOR_HEIGHT: f64 = 2.0;

impl AnchorLayout {
    pub fn new(technology: Technology, anchors: Vec<Anchor>) -> Result<Self> {
        let layout = Self { technology, anchors };
        layout.validate()?;
        Ok(layout)
    }

    /// Four anchors at the corners of `area`, mounted at
    /// [`DEFAULT_ANCHOR_HEIGHT`]. BLE arrays point their reference direction
    /// at the area center, which keeps reported angles far from ±180°.
    pub fn corners(technology: Technology, area: &Area) -> Self {
        let corners = [
            Point2::new(area.min.x, area.min.y),
            Point2::new(area.max.x, area.min.y),
            Point2::new(area.max.x, area.max.y),
            Point2::new(area.min.x, area.max.y),
        ];
        let c = area.center();
        let anchors = corners
            .iter()
            .enumerate()
            .map(|(i, p)| Anchor {
                id: i as u32 + 1,
                position: p.at_height(DEFAULT_ANCHOR_HEIGHT),
                orientation_deg: match technology {
                    Technology::Ble => wrap_deg((c.y - p.y).atan2(c.x - p.x).to_degrees()),
                    Technology::Uwb => 0.0,
                },
            })
            .collect();
        Self { technology, anchors }
    }

    pub fn validate(&self) -> Result<()> {
        let min = match self.technology {
            Technology::Ble => 2,
            Technology::Uwb => 3,
        };
        if self.anchors.len() < min {
            return Err(Error::InvalidInput(format!(
                "{} layout needs at least {min} anchors, got {}",
                self.technology,
                self.anchors.len()
            )));
        }
        let mut ids = HashSet::new();
        for a in &self.anchors {
            if !ids.insert(a.id) {
                return Err(Error::InvalidInput(format!("duplicate anchor id {}", a.id)));
            }
            if !a.position.is_finite() || !a.orientation_deg.is_finite() {
                return Err(Error::InvalidInput(format!("anchor {} is not finite", a.id)));
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.anchors.iter().map(|a| a.position).collect()
    }
}

pub const BLE_CHANNELS: usize = 8;
pub const UWB_ANCHORS: usize = 4;

/// One BLE measurement row: two RSSI and two AoA paths per locator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleRecord {
    pub timestamp: f64,
    /// dBm, `[locator0 path0, locator0 path1, locator1 path0, ...]`.
    pub rssi: [f64; BLE_CHANNELS],
    /// Degrees in each locator's array frame, same ordering as `rssi`.
    pub aoa: [f64; BLE_CHANNELS],
    /// Triangulated and tracked BLE position.
    pub baseline: Point2,
    /// Reference position (UWB).
    pub truth: Point2,
}

impl BleRecord {
    pub fn validate(&self) -> Result<()> {
        let finite = self.timestamp.is_finite()
            && self.rssi.iter().chain(&self.aoa).all(|v| v.is_finite())
            && self.baseline.is_finite()
            && self.truth.is_finite();
        if !finite {
            return Err(Error::InvalidInput("BLE record has non-finite fields".into()));
        }
        if let Some(a) = self.aoa.iter().find(|a| !(-180.0..180.0).contains(*a)) {
            return Err(Error::InvalidInput(format!("AoA {a} outside [-180, 180)")));
        }
        Ok(())
    }
}

/// One UWB measurement row: CIR power, accumulated preamble symbols and
/// two-way-ranging distance per anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbRecord {
    pub timestamp: f64,
    pub cir: [f64; UWB_ANCHORS],
    pub psa: [u32; UWB_ANCHORS],
    /// Meters.
    pub dist: [f64; UWB_ANCHORS],
    /// Multilaterated UWB position.
    pub baseline: Point2,
    /// Reference position (motion capture).
    pub truth: Point2,
}

impl UwbRecord {
    pub fn validate(&self) -> Result<()> {
        let finite = self.timestamp.is_finite()
            && self.cir.iter().chain(&self.dist).all(|v| v.is_finite())
            && self.baseline.is_finite()
            && self.truth.is_finite();
        if !finite {
            return Err(Error::InvalidInput("UWB record has non-finite fields".into()));
        }
        if self.dist.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidInput("negative UWB distance".into()));
        }
        Ok(())
    }
}

/// Time-ordered records of a single technology.
#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Ble(Vec<BleRecord>),
    Uwb(Vec<UwbRecord>),
}

impl Records {
    pub fn technology(&self) -> Technology {
        match self {
            Records::Ble(_) => Technology::Ble,
            Records::Uwb(_) => Technology::Uwb,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Records::Ble(r) => r.len(),
            Records::Uwb(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamps(&self) -> Vec<f64> {
        match self {
            Records::Ble(r) => r.iter().map(|r| r.timestamp).collect(),
            Records::Uwb(r) => r.iter().map(|r| r.timestamp).collect(),
        }
    }

    pub fn baselines(&self) -> Vec<Point2> {
        match self {
            Records::Ble(r) => r.iter().map(|r| r.baseline).collect(),
            Records::Uwb(r) => r.iter().map(|r| r.baseline).collect(),
        }
    }

    pub fn truths(&self) -> Vec<Point2> {
        match self {
            Records::Ble(r) => r.iter().map(|r| r.truth).collect(),
            Records::Uwb(r) => r.iter().map(|r| r.truth).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Records::Ble(r) => r.iter().try_for_each(BleRecord::validate),
            Records::Uwb(r) => r.iter().try_for_each(UwbRecord::validate),
        }
    }
}

/// One scenario run; the unit held out by cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub scenario: Scenario,
    records: Records,
}

impl Session {
    pub fn new(id: impl Into<String>, scenario: Scenario, records: Records) -> Result<Self> {
        let id = id.into();
        records.validate()?;
        let ts = records.timestamps();
        if let Some(w) = ts.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "session {id}: timestamps not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { id, scenario, records })
    }

    pub fn records(&self) -> &Records {
        &self.records
    }

    pub fn technology(&self) -> Technology {
        self.records.technology()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
