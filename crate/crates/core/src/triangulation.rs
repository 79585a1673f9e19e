//! Conical AoA error regions and their pairwise intersection.
//!
//! Each path estimate becomes a cone with its apex at the locator and a
//! fixed angular half-width. The cone is tessellated as a TIN: a fan of
//! twelve triangles from the apex to a ring of twelve boundary vertices,
//! closed by a cap over the ring. For every locator pair and every
//! combination of their two paths, the twelve apex-to-vertex edges of the
//! first cone are tested against the faces of the second; the resulting
//! surface crossings are clustered into candidate regions.

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Expected AoA accuracy used as the cone half-angle.
pub const DEFAULT_HALF_ANGLE_DEG: f64 = 6.0;
pub const CONE_VERTICES: usize = 12;
/// Tolerance on the barycentric inside test (boundary inclusive).
pub const BARYCENTRIC_EPS: f64 = 1e-9;
/// Single-linkage radius for merging intersection points.
pub const CLUSTER_RADIUS_M: f64 = 0.5;

const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Point3,
    pub b: Point3,
    pub c: Point3,
}

impl Triangle {
    pub const fn new(a: Point3, b: Point3, c: Point3) -> Self {
        Self { a, b, c }
    }

    pub fn normal(&self) -> Point3 {
        (self.b - self.a).cross(&(self.c - self.a))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.normal().norm()
    }

    pub fn centroid(&self) -> Point3 {
        (self.a + self.b + self.c) * (1.0 / 3.0)
    }
}

/// TIN bounding one AoA path's conical error region.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicalPathRegion {
    pub apex: Point3,
    /// Unit vector along the path direction.
    pub axis: Point3,
    pub half_angle_deg: f64,
    pub max_range_m: f64,
    /// Boundary vertices on the far circle of the cone.
    pub vertices: Vec<Point3>,
    /// Apex fan followed by the far cap, wound clockwise seen from outside.
    pub faces: Vec<Triangle>,
}

impl ConicalPathRegion {
    /// Apex-to-vertex boundary edges.
    pub fn edges(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        self.vertices.iter().map(move |v| (self.apex, *v))
    }

    /// Whether `p` lies in the closed cone, within `tol` meters of its
    /// lateral surface, and no further than the far cap.
    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let d = *p - self.apex;
        let along = d.dot(&self.axis);
        if along < -tol || along > self.max_range_m + tol {
            return false;
        }
        let radial = (d - self.axis * along).norm();
        let half = self.half_angle_deg.to_radians();
        // distance from the lateral surface, positive outside
        let outside = radial * half.cos() - along.max(0.0) * half.sin();
        outside <= tol
    }
}

/// Builds the TIN for a horizontal path direction. Azimuth 0° is +x.
pub fn build_cone(
    apex: Point3,
    azimuth_deg: f64,
    half_angle_deg: f64,
    max_range_m: f64,
    n_vertices: usize,
) -> Result<ConicalPathRegion> {
    if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) {
        return Err(Error::InvalidInput(format!("half angle {half_angle_deg} not in (0, 90)")));
    }
    if !(max_range_m > 0.0) || !max_range_m.is_finite() {
        return Err(Error::InvalidInput(format!("max range {max_range_m} must be positive")));
    }
    if n_vertices < 3 {
        return Err(Error::InvalidInput("a cone needs at least 3 boundary vertices".into()));
    }
    let axis = Point3::from_azimuth(azimuth_deg);
    let up = Point3::new(0.0, 0.0, 1.0);
    let side = axis.cross(&up);
    let center = apex + axis * max_range_m;
    let radius = max_range_m * half_angle_deg.to_radians().tan();
    let vertices: Vec<Point3> = (0..n_vertices)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_vertices as f64;
            center + (up * phi.cos() + side * phi.sin()) * radius
        })
        .collect();

    let mut faces = Vec::with_capacity(2 * n_vertices - 2);
    for k in 0..n_vertices {
        faces.push(Triangle::new(apex, vertices[k], vertices[(k + 1) % n_vertices]));
    }
    for k in 1..n_vertices - 1 {
        faces.push(Triangle::new(vertices[0], vertices[k + 1], vertices[k]));
    }
    Ok(ConicalPathRegion { apex, axis, half_angle_deg, max_range_m, vertices, faces })
}

/// Barycentric coordinates and location of a segment/triangle crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentHit {
    pub point: Point3,
    pub s: f64,
    pub t: f64,
}

/// Intersects the segment `p0 → p1` with triangle `(A, B, C)`.
///
/// The crossing `Q` with the triangle's plane is expressed as
/// `Q = A + s·u + t·v` with `u = B − A`, `v = C − A`, `w = Q − A`:
///
/// ```text
/// s = ((u·v)(w·v) − (v·v)(w·u)) / ((u·v)² − (u·u)(v·v))
/// t = ((u·v)(w·u) − (u·u)(w·v)) / ((u·v)² − (u·u)(v·v))
/// ```
///
/// and the hit is accepted when `s ≥ 0`, `t ≥ 0` and `s + t ≤ 1`.
pub fn segment_triangle_intersect(p0: Point3, p1: Point3, tri: &Triangle) -> Result<Option<SegmentHit>> {
    let u = tri.b - tri.a;
    let v = tri.c - tri.a;
    let n = u.cross(&v);
    let area = 0.5 * n.norm();
    if !(area > MIN_TRIANGLE_AREA) {
        return Err(Error::DegenerateTriangle { area });
    }
    let dir = p1 - p0;
    let denom = n.dot(&dir);
    if denom.abs() <= 1e-12 * n.norm() * dir.norm() {
        return Ok(None);
    }
    let r = n.dot(&(tri.a - p0)) / denom;
    if !(-BARYCENTRIC_EPS..=1.0 + BARYCENTRIC_EPS).contains(&r) {
        return Ok(None);
    }
    let q = p0 + dir * r;
    let w = q - tri.a;
    let (uu, uv, vv, wu, wv) = (u.dot(&u), u.dot(&v), v.dot(&v), w.dot(&u), w.dot(&v));
    let d = uv * uv - uu * vv;
    let s = (uv * wv - vv * wu) / d;
    let t = (uv * wu - uu * wv) / d;
    let inside = s >= -BARYCENTRIC_EPS && t >= -BARYCENTRIC_EPS && s + t <= 1.0 + BARYCENTRIC_EPS;
    Ok(inside.then_some(SegmentHit { point: q, s, t }))
}

/// The two path regions of one locator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPaths {
    pub anchor_id: u32,
    pub regions: [ConicalPathRegion; 2],
}

/// Cluster of intersection points forming one candidate target region.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRegion {
    pub members: Vec<Point3>,
    /// Number of distinct locator pairs contributing points.
    pub overlap_count: usize,
    pub centroid: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub candidates: Vec<CandidateRegion>,
    /// Segment-versus-region tests executed.
    pub tests_executed: usize,
}

/// Tests one segment against every face of `region`, returning the
/// distinct crossing points.
fn segment_region_hits(p0: Point3, p1: Point3, region: &ConicalPathRegion, out: &mut Vec<Point3>) -> Result<()> {
    let start = out.len();
    for face in &region.faces {
        if let Some(hit) = segment_triangle_intersect(p0, p1, face)? {
            // shared face edges report the same crossing twice
            if !out[start..].iter().any(|p| p.distance(&hit.point) < 1e-9) {
                out.push(hit.point);
            }
        }
    }
    Ok(())
}

/// Enumerates all locator pairs and path combinations and clusters the
/// resulting crossings.
///
/// Locators are processed in ascending id order, so the result does not
/// depend on the order of `anchors`. Each (pair, combination) runs one test
/// per boundary edge of the lower-id locator's region against the other
/// region's TIN.
pub fn pairwise_candidates(anchors: &[AnchorPaths]) -> Result<Triangulation> {
    let mut sorted: Vec<&AnchorPaths> = anchors.iter().collect();
    sorted.sort_by_key(|a| a.anchor_id);

    let mut points: Vec<(Point3, usize)> = Vec::new();
    let mut tests = 0;
    let mut hits = Vec::new();
    let mut pair = 0;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            for first in &sorted[i].regions {
                for second in &sorted[j].regions {
                    for (p0, p1) in first.edges() {
                        tests += 1;
                        hits.clear();
                        segment_region_hits(p0, p1, second, &mut hits)?;
                        points.extend(hits.iter().map(|p| (*p, pair)));
                    }
                }
            }
            pair += 1;
        }
    }
    Ok(Triangulation { candidates: cluster(&points, CLUSTER_RADIUS_M), tests_executed: tests })
}

/// Single-linkage clustering; clusters are ordered by their first member.
fn cluster(points: &[(Point3, usize)], radius: f64) -> Vec<CandidateRegion> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if points[i].0.distance(&points[j].0) <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(_, idx)| {
            let members: Vec<Point3> = idx.iter().map(|&i| points[i].0).collect();
            let mut pairs: Vec<usize> = idx.iter().map(|&i| points[i].1).collect();
            pairs.sort_unstable();
            pairs.dedup();
            let centroid = Point3::mean(&members).expect("clusters are non-empty");
            CandidateRegion { members, overlap_count: pairs.len(), centroid }
        })
        .collect()
}
