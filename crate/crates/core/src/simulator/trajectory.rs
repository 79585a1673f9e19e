//! Ground-truth motion for the two recording scenarios.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};

/// Record rate of both testbeds.
pub const SAMPLE_RATE_HZ: f64 = 10.0;
/// Hard cap on target speed.
pub const MAX_SPEED: f64 = 2.0;
/// Distance kept from the area boundary.
const WALL_MARGIN: f64 = 0.3;
/// How far ahead a walker looks for walls, m.
const LOOKAHEAD: f64 = 1.0;
/// Fastest heading change of a walker, rad/s.
const MAX_TURN_RATE: f64 = 1.2;

/// Nominal motion of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStyle {
    /// Mean speed, m/s.
    pub speed: f64,
    /// Heading random-walk intensity, rad/√s.
    pub heading_noise: f64,
    /// Lateral gait sway amplitude, m.
    pub sway_amplitude: f64,
    /// Per-sample position jitter, m.
    pub jitter: f64,
}

impl MotionStyle {
    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Walking => Self { speed: 1.2, heading_noise: 0.6, sway_amplitude: 0.03, jitter: 0.01 },
            Scenario::Trolley => Self { speed: 0.8, heading_noise: 0.0, sway_amplitude: 0.0, jitter: 0.002 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub sample_rate_hz: f64,
    /// `(timestamp s, position)` in time order.
    pub points: Vec<(f64, Point2)>,
}

impl Trajectory {
    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.points.iter().map(|(_, p)| *p)
    }

    /// Direction of travel at sample `k` (degrees) from the neighbouring
    /// samples; `None` while standing still.
    pub fn heading_deg(&self, k: usize) -> Option<f64> {
        let n = self.points.len();
        if n < 2 || k >= n {
            return None;
        }
        let d = self.points[(k + 1).min(n - 1)].1 - self.points[k.saturating_sub(1)].1;
        (d.x.hypot(d.y) > 1e-9).then(|| d.y.atan2(d.x).to_degrees())
    }
}

/// Generates a trajectory sampled at [`SAMPLE_RATE_HZ`].
///
/// Walking is a heading random walk with gait sway that turns back towards
/// the middle of the area near the walls. Trolley follows a smooth
/// elliptical loop whose size slowly breathes, so one session sweeps an
/// annulus around the center.
pub fn gen_trajectory(scenario: Scenario, duration_s: f64, area: &Area, seed: u64) -> Result<Trajectory> {
    gen_trajectory_with(scenario, MotionStyle::for_scenario(scenario), duration_s, area, seed)
}

pub fn gen_trajectory_with(
    scenario: Scenario,
    style: MotionStyle,
    duration_s: f64,
    area: &Area,
    seed: u64,
) -> Result<Trajectory> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidInput(format!("duration {duration_s} must be positive")));
    }
    if area.is_empty() || area.width() <= 2.0 * WALL_MARGIN || area.height() <= 2.0 * WALL_MARGIN {
        return Err(Error::InvalidInput("test area is empty".into()));
    }
    let n = (duration_s * SAMPLE_RATE_HZ).round() as usize;
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let inner = Area::new(
        area.min + Point2::new(WALL_MARGIN, WALL_MARGIN),
        area.max - Point2::new(WALL_MARGIN, WALL_MARGIN),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = match scenario {
        Scenario::Walking => walk(&style, n, dt, &inner, &mut rng),
        Scenario::Trolley => trolley(&style, n, dt, &inner, &mut rng),
    };
    let points = limit_speed(raw, dt, &inner)
        .into_iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * dt, p))
        .collect();
    Ok(Trajectory { scenario, sample_rate_hz: SAMPLE_RATE_HZ, points })
}

fn clamp_to(area: &Area, p: Point2) -> Point2 {
    Point2::new(p.x.clamp(area.min.x, area.max.x), p.y.clamp(area.min.y, area.max.y))
}

fn walk(style: &MotionStyle, n: usize, dt: f64, inner: &Area, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let jitter = Normal::new(0.0, style.jitter.max(0.0)).unwrap();
    let turn = Normal::new(0.0, style.heading_noise * dt.sqrt()).unwrap();
    let c = inner.center();
    let mut pos = Point2::new(
        rng.random_range(inner.min.x + 0.25 * inner.width()..inner.max.x - 0.25 * inner.width()),
        rng.random_range(inner.min.y + 0.25 * inner.height()..inner.max.y - 0.25 * inner.height()),
    );
    let mut heading = rng.random_range(-PI..PI);
    let gait_hz = rng.random_range(1.6..2.0);
    let gait_phase = rng.random_range(0.0..2.0 * PI);
    let mut speed = style.speed;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let sway = style.sway_amplitude * (2.0 * PI * gait_hz * t + gait_phase).sin();
        let lateral = Point2::new(-heading.sin(), heading.cos());
        out.push(clamp_to(inner, pos + lateral * sway + Point2::new(jitter.sample(rng), jitter.sample(rng))));

        heading += turn.sample(rng);
        // look ahead and turn back towards the middle before reaching a wall
        let ahead = pos + Point2::new(heading.cos(), heading.sin()) * LOOKAHEAD;
        if !inner.contains(&ahead) {
            let want = (c.y - pos.y).atan2(c.x - pos.x);
            let err = (want - heading + PI).rem_euclid(2.0 * PI) - PI;
            heading += err.clamp(-MAX_TURN_RATE * dt, MAX_TURN_RATE * dt);
        }
        speed = (0.9 * speed + 0.1 * style.speed * (1.0 + 0.15 * rng.random_range(-1.0..1.0))).max(0.0);
        pos = clamp_to(inner, pos + Point2::new(heading.cos(), heading.sin()) * (speed * dt));
    }
    out
}

fn trolley(style: &MotionStyle, n: usize, dt: f64, inner: &Area, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let jitter = Normal::new(0.0, style.jitter.max(0.0)).unwrap();
    let c = inner.center() + Point2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let ax = 0.35 * inner.width() * rng.random_range(0.9..1.1);
    let ay = 0.35 * inner.height() * rng.random_range(0.9..1.1);
    let breathe_period = rng.random_range(35.0..55.0);
    let breathe_phase = rng.random_range(0.0..2.0 * PI);
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut theta = rng.random_range(-PI..PI);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let scale = 1.0 + 0.2 * (2.0 * PI * t / breathe_period + breathe_phase).sin();
        let (rx, ry) = (ax * scale, ay * scale);
        let p = c + Point2::new(rx * theta.cos(), ry * theta.sin());
        out.push(clamp_to(inner, p + Point2::new(jitter.sample(rng), jitter.sample(rng))));
        // advance along the ellipse at the nominal speed
        let local_radius = (rx * theta.sin()).hypot(ry * theta.cos()).max(0.2);
        theta += direction * style.speed * dt / local_radius;
    }
    out
}

fn limit_speed(points: Vec<Point2>, dt: f64, inner: &Area) -> Vec<Point2> {
    let max_step = MAX_SPEED * dt * 0.999;
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for p in points {
        let q = match out.last() {
            Some(prev) if prev.distance(&p) > max_step => {
                let d = p - *prev;
                clamp_to(inner, *prev + d * (max_step / prev.distance(&p)))
            }
            _ => p,
        };
        out.push(q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_lengths(t: &Trajectory) -> Vec<f64> {
        t.points.windows(2).map(|w| w[0].1.distance(&w[1].1)).collect()
    }

    #[test]
    fn trolley_sample_count_and_bounds() {
        let area = Area::default();
        let t = gen_trajectory(Scenario::Trolley, 90.0, &area, 1).unwrap();
        assert_eq!(t.points.len(), 900);
        assert!(t.positions().all(|p| area.contains(&p)));
        assert!(step_lengths(&t).iter().all(|s| *s <= MAX_SPEED / SAMPLE_RATE_HZ));
        assert!(t.points.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn deterministic_per_seed() {
        let area = Area::default();
        let a = gen_trajectory(Scenario::Walking, 90.0, &area, 1).unwrap();
        let b = gen_trajectory(Scenario::Walking, 90.0, &area, 1).unwrap();
        assert_eq!(a, b);
        let c = gen_trajectory(Scenario::Walking, 90.0, &area, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gen_trajectory(Scenario::Walking, 0.0, &Area::default(), 1).is_err());
        assert!(gen_trajectory(Scenario::Walking, 10.0, &Area::with_size(0.0, 5.0), 1).is_err());
    }

    #[test]
    fn walking_is_jitterier_than_trolley() {
        // residual of each step around the local mean step (window 5)
        fn residual(t: &Trajectory) -> f64 {
            let steps: Vec<Point2> = t.points.windows(2).map(|w| w[1].1 - w[0].1).collect();
            let mut total = 0.0;
            let mut n = 0;
            for i in 2..steps.len() - 2 {
                let mean = steps[i - 2..=i + 2].iter().fold(Point2::default(), |a, s| a + *s) * 0.2;
                total += (steps[i] - mean).x.hypot((steps[i] - mean).y);
                n += 1;
            }
            total / n as f64
        }
        let area = Area::default();
        for seed in 1..4 {
            let w = gen_trajectory(Scenario::Walking, 90.0, &area, seed).unwrap();
            let t = gen_trajectory(Scenario::Trolley, 90.0, &area, seed).unwrap();
            assert!(residual(&t) < residual(&w), "seed {seed}");
        }
    }

    #[test]
    fn nominal_speeds() {
        let area = Area::default();
        let mean_speed = |s| {
            let t = gen_trajectory(s, 90.0, &area, 7).unwrap();
            let steps = step_lengths(&t);
            steps.iter().sum::<f64>() / steps.len() as f64 * SAMPLE_RATE_HZ
        };
        let w = mean_speed(Scenario::Walking);
        let t = mean_speed(Scenario::Trolley);
        assert!((0.9..1.6).contains(&w), "walking {w}");
        assert!((0.6..1.0).contains(&t), "trolley {t}");
    }
}
