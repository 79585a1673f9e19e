//! Constant-velocity Kalman tracking of the BLE target and the complete
//! BLE baseline pipeline (AoA filter → cone intersection → gated track).

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::aoa::{filter_aoa, AoaHistory};
use crate::domain::{AnchorLayout, Technology, BLE_CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, Area, Point2};
use crate::triangulation::{
    build_cone, pairwise_candidates, AnchorPaths, CandidateRegion, CONE_VERTICES,
    DEFAULT_HALF_ANGLE_DEG,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    /// Acceleration noise variance, (m/s²)². Large enough for a walker
    /// turning at a wall; smaller values make the track lag behind.
    pub q: f64,
    /// Position measurement variance, m².
    pub r: f64,
    /// Mahalanobis gate radius.
    pub gate: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self { q: 3.0 * 3.0, r: 0.3 * 0.3, gate: 3.0 }
    }
}

/// State `(x, y, vx, vy)` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub q: f64,
    pub r: f64,
}

const H: Matrix2x4<f64> = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);

impl KalmanState {
    /// Starts a track at rest at `position` with position variance `r`.
    pub fn at_rest(position: Point2, params: &KalmanParams) -> Self {
        Self {
            x: Vector4::new(position.x, position.y, 0.0, 0.0),
            p: Matrix4::from_diagonal(&Vector4::new(params.r, params.r, 1.0, 1.0)),
            q: params.q,
            r: params.r,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.x[2], self.x[3])
    }

    /// Constant-velocity propagation with discrete white-noise acceleration.
    pub fn predict(&self, dt: f64) -> Result<KalmanState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("predict needs dt > 0, got {dt}")));
        }
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (a, b, c) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
        #[rustfmt::skip]
        let q = Matrix4::new(
            a, 0.0, b, 0.0,
            0.0, a, 0.0, b,
            b, 0.0, c, 0.0,
            0.0, b, 0.0, c,
        ) * self.q;
        let p = f * self.p * f.transpose() + q;
        Ok(KalmanState { x: f * self.x, p: symmetrize(p), ..*self })
    }

    /// Covariance of the position innovation, `H P Hᵀ + r I`.
    pub fn innovation_covariance(&self) -> Matrix2<f64> {
        H * self.p * H.transpose() + Matrix2::identity() * self.r
    }

    /// Mahalanobis distance of `p` from the predicted position.
    pub fn mahalanobis(&self, p: &Point2) -> f64 {
        let s = self.innovation_covariance();
        let nu = Vector2::new(p.x - self.x[0], p.y - self.x[1]);
        match s.try_inverse() {
            Some(inv) => (nu.transpose() * inv * nu)[0].max(0.0).sqrt(),
            None => f64::INFINITY,
        }
    }

    /// Position measurement update (Joseph form).
    pub fn update(&self, meas: &Point2) -> KalmanState {
        let s = self.innovation_covariance();
        let Some(s_inv) = s.try_inverse() else {
            return *self;
        };
        let k = self.p * H.transpose() * s_inv;
        let nu = Vector2::new(meas.x - self.x[0], meas.y - self.x[1]);
        let i_kh = Matrix4::identity() - k * H;
        let p = i_kh * self.p * i_kh.transpose() + k * k.transpose() * self.r;
        KalmanState { x: self.x + k * nu, p: symmetrize(p), ..*self }
    }
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Outcome of gating candidates against the predicted track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Centroid of the best surviving candidate.
    Candidate(Point2),
    /// No candidate survived; the prediction itself.
    Predicted(Point2),
}

impl Selection {
    pub fn position(&self) -> Point2 {
        match *self {
            Selection::Candidate(p) | Selection::Predicted(p) => p,
        }
    }
}

/// Drops candidates outside the Mahalanobis gate around `predicted`, then
/// picks the one with the most overlapping locator pairs, breaking ties by
/// Euclidean distance to the prediction.
pub fn gate_and_rank(candidates: &[CandidateRegion], predicted: &KalmanState, gate: f64) -> Selection {
    let center = predicted.position();
    candidates
        .iter()
        .map(|c| c.centroid.xy())
        .zip(candidates)
        .filter(|(p, _)| predicted.mahalanobis(p) <= gate)
        .min_by(|(pa, a), (pb, b)| {
            b.overlap_count
                .cmp(&a.overlap_count)
                .then(pa.distance(&center).total_cmp(&pb.distance(&center)))
        })
        .map_or(Selection::Predicted(center), |(p, _)| Selection::Candidate(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub kalman: KalmanParams,
    pub half_angle_deg: f64,
    /// Cone length; the test-area diagonal by default.
    pub max_range_m: f64,
}

impl TrackerConfig {
    pub fn for_area(area: &Area) -> Self {
        Self {
            kalman: KalmanParams::default(),
            half_angle_deg: DEFAULT_HALF_ANGLE_DEG,
            max_range_m: area.diagonal(),
        }
    }
}

/// Per-target BLE localisation: filters each locator's AoA streams,
/// intersects the conical path regions and tracks the best candidate.
#[derive(Debug, Clone)]
pub struct BleBaselineTracker {
    layout: AnchorLayout,
    config: TrackerConfig,
    histories: Vec<[AoaHistory; 2]>,
    state: Option<KalmanState>,
    last_t: f64,
    tests_executed: usize,
    misses: usize,
}

/// Consecutive steps without a gated candidate after which the track is
/// considered lost and restarted on the best candidate.
pub const MAX_COASTING_STEPS: usize = 10;

impl BleBaselineTracker {
    pub fn new(layout: AnchorLayout, config: TrackerConfig) -> Result<Self> {
        layout.validate()?;
        if layout.technology != Technology::Ble || layout.anchors.len() * 2 != BLE_CHANNELS {
            return Err(Error::InvalidInput("BLE tracking needs a 4-locator BLE layout".into()));
        }
        let histories = vec![[AoaHistory::new(), AoaHistory::new()]; layout.anchors.len()];
        Ok(Self { layout, config, histories, state: None, last_t: f64::NEG_INFINITY, tests_executed: 0, misses: 0 })
    }

    /// Intersection tests run by the most recent step.
    pub fn tests_executed(&self) -> usize {
        self.tests_executed
    }

    pub fn state(&self) -> Option<&KalmanState> {
        self.state.as_ref()
    }

    /// Consumes one record's AoA estimates (array frame, two per locator)
    /// and returns the tracked position.
    pub fn step(&mut self, timestamp: f64, aoa: &[f64; BLE_CHANNELS]) -> Result<Point2> {
        let mut paths = Vec::with_capacity(self.layout.anchors.len());
        for (i, anchor) in self.layout.anchors.iter().enumerate() {
            let regions = [0, 1].map(|slot| {
                let [closest, _] = filter_aoa(&mut self.histories[i][slot], aoa[2 * i + slot]);
                let azimuth = wrap_deg(closest + anchor.orientation_deg);
                build_cone(anchor.position, azimuth, self.config.half_angle_deg, self.config.max_range_m, CONE_VERTICES)
            });
            let [a, b] = regions;
            paths.push(AnchorPaths { anchor_id: anchor.id, regions: [a?, b?] });
        }
        let tri = pairwise_candidates(&paths)?;
        self.tests_executed = tri.tests_executed;

        let params = self.config.kalman;
        if self.state.is_some() && timestamp <= self.last_t {
            return Err(Error::InvalidInput(format!(
                "timestamps must increase ({} after {})",
                timestamp, self.last_t
            )));
        }
        let lost = self.misses >= MAX_COASTING_STEPS && !tri.candidates.is_empty();
        let next = match self.state {
            Some(state) if !lost => {
                let predicted = state.predict(timestamp - self.last_t)?;
                match gate_and_rank(&tri.candidates, &predicted, params.gate) {
                    Selection::Candidate(p) => {
                        self.misses = 0;
                        predicted.update(&p)
                    }
                    Selection::Predicted(_) => {
                        self.misses += 1;
                        predicted
                    }
                }
            }
            _ => {
                self.misses = 0;
                let start = tri
                    .candidates
                    .iter()
                    .rev()
                    .max_by_key(|c| c.overlap_count)
                    .map(|c| KalmanState::at_rest(c.centroid.xy(), &params));
                start.unwrap_or_else(|| {
                    let mut s = KalmanState::at_rest(self.layout_center(), &params);
                    s.p[(0, 0)] = 10.0;
                    s.p[(1, 1)] = 10.0;
                    s
                })
            }
        };
        self.state = Some(next);
        self.last_t = timestamp;
        Ok(next.position())
    }

    fn layout_center(&self) -> Point2 {
        let n = self.layout.anchors.len() as f64;
        self.layout.anchors.iter().fold(Point2::default(), |acc, a| acc + a.position.xy() * (1.0 / n))
    }
}
