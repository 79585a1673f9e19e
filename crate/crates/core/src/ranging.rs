//! UWB single-sided two-way ranging and least-squares multilateration.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Timestamps of one poll/response exchange. The target stamps its poll
/// transmission and the response reception; the anchor stamps the poll
/// reception and its response transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwrExchange {
    pub t_poll_tx: f64,
    pub t_resp_rx: f64,
    pub t_poll_rx: f64,
    pub t_resp_tx: f64,
}

impl TwrExchange {
    pub fn round_trip(&self) -> f64 {
        self.t_resp_rx - self.t_poll_tx
    }

    pub fn reply(&self) -> f64 {
        self.t_resp_tx - self.t_poll_rx
    }
}

/// Distance from one single-sided exchange: half of round-trip minus
/// reply time, times the speed of light.
pub fn twr_distance(x: &TwrExchange) -> Result<f64> {
    if !(x.round_trip() >= 0.0 && x.reply() >= 0.0) {
        return Err(Error::InvalidInput("exchange timestamps out of order".into()));
    }
    let tof = (x.round_trip() - x.reply()) / 2.0;
    if tof < 0.0 {
        return Err(Error::NegativeTimeOfFlight { tof_s: tof });
    }
    Ok(SPEED_OF_LIGHT * tof)
}

pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multilateration {
    pub position: Point2,
    pub iterations: usize,
    /// False when the iteration cap was hit; `position` is the last iterate.
    pub converged: bool,
}

/// Sum of squared range residuals at plan position `p`.
pub fn range_cost(anchors: &[Point3], dists: &[f64], target_height: f64, p: Point2) -> f64 {
    anchors
        .iter()
        .zip(dists)
        .map(|(a, d)| (p.at_height(target_height).distance(a) - d).powi(2))
        .sum()
}

/// Gauss–Newton fit of a plan position at a known height to the measured
/// anchor distances, started at the anchor centroid.
pub fn multilaterate(anchors: &[Point3], dists: &[f64], target_height: f64) -> Result<Multilateration> {
    if anchors.len() != dists.len() {
        return Err(Error::DimensionMismatch { expected: anchors.len(), got: dists.len() });
    }
    if anchors.len() < 3 {
        return Err(Error::InvalidInput("multilateration needs at least 3 anchors".into()));
    }
    if dists.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite distance".into()));
    }
    if plan_collinear(anchors) {
        return Err(Error::InvalidInput("anchors are collinear in plan view".into()));
    }

    let n = anchors.len() as f64;
    let mut p = anchors.iter().fold(Point2::default(), |acc, a| acc + a.xy() * (1.0 / n));
    let mut cost = range_cost(anchors, dists, target_height, p);
    for iter in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (a, d) in anchors.iter().zip(dists) {
            let delta = p.at_height(target_height) - *a;
            let rho = delta.norm().max(1e-12);
            let j = Vector2::new(delta.x / rho, delta.y / rho);
            jtj += j * j.transpose();
            jtr += j * (rho - d);
        }
        let Some(step) = jtj.try_inverse().map(|inv| -(inv * jtr)) else {
            return Err(Error::InvalidInput("singular multilateration geometry".into()));
        };
        // halve the Gauss–Newton step until the cost does not increase
        let mut scale = 1.0;
        let mut next = p + Point2::new(step.x, step.y);
        let mut next_cost = range_cost(anchors, dists, target_height, next);
        while next_cost > cost && scale > 1e-3 {
            scale *= 0.5;
            next = p + Point2::new(step.x, step.y) * scale;
            next_cost = range_cost(anchors, dists, target_height, next);
        }
        let moved = next.distance(&p);
        if next_cost <= cost {
            p = next;
            cost = next_cost;
        }
        if moved < STEP_TOLERANCE_M {
            return Ok(Multilateration { position: p, iterations: iter, converged: true });
        }
    }
    Ok(Multilateration { position: p, iterations: MAX_ITERATIONS, converged: false })
}

fn plan_collinear(anchors: &[Point3]) -> bool {
    let a0 = anchors[0].xy();
    let scale = anchors.iter().map(|a| a.xy().distance(&a0)).fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    anchors.iter().skip(1).all(|a| {
        anchors.iter().skip(1).all(|b| {
            let (u, v) = (a.xy() - a0, b.xy() - a0);
            (u.x * v.y - u.y * v.x).abs() <= 1e-9 * scale * scale
        })
    })
}
