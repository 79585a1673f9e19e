//! Planar and spatial points, the positioning error metric and angle helpers.
//!
//! Angles are degrees throughout. Azimuth 0° points along +x and grows
//! counter-clockwise towards +y.

use std::ops::{Add, Mul, Sub};

/// A position in the horizontal plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Lifts the point to 3D at the given height.
    pub fn at_height(&self, z: f64) -> Point3 {
        Point3::new(self.x, self.y, z)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// A position or direction in space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        (*self - *o).norm()
    }

    pub fn normalized(&self) -> Point3 {
        *self * (1.0 / self.norm())
    }

    /// Drops the height.
    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Unit vector in the horizontal plane pointing at `azimuth_deg`.
    pub fn from_azimuth(azimuth_deg: f64) -> Point3 {
        let a = azimuth_deg.to_radians();
        Point3::new(a.cos(), a.sin(), 0.0)
    }

    pub fn mean(points: &[Point3]) -> Option<Point3> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Point3::default(), |acc, p| acc + *p);
        Some(sum * (1.0 / points.len() as f64))
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, k: f64) -> Point3 {
        Point3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Axis-aligned rectangular test area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub min: Point2,
    pub max: Point2,
}

impl Area {
    pub const fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    /// Area with its lower-left corner at the origin.
    pub const fn with_size(width: f64, height: f64) -> Self {
        Self::new(Point2::new(0.0, 0.0), Point2::new(width, height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn is_empty(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

impl Default for Area {
    fn default() -> Self {
        Area::with_size(5.0, 5.0)
    }
}

/// Planar positioning error between an estimate and the reference position.
pub fn euclidean_error(estimate: &Point2, truth: &Point2) -> f64 {
    estimate.distance(truth)
}

/// Wraps an angle into `[-180, 180)`.
pub fn wrap_deg(angle: f64) -> f64 {
    let a = (angle + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if a >= 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Smallest absolute angular separation, in `[0, 180]`.
pub fn angular_distance_deg(a: f64, b: f64) -> f64 {
    wrap_deg(a - b).abs()
}

/// Circular mean of a set of angles. `None` when the resultant vector
/// vanishes and no mean direction exists.
pub fn circular_mean_deg(angles: &[f64]) -> Option<f64> {
    if angles.is_empty() {
        return None;
    }
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let n = angles.len() as f64;
    if (s / n).hypot(c / n) < 1e-12 {
        return None;
    }
    Some(wrap_deg(s.atan2(c).to_degrees()))
}
