//! Planar PQ-polygon algebra.
//!
//! Flexibility regions of individual units, of aggregated units at a bus and
//! of the whole distribution grid are all simple polygons in the (ΔP, ΔQ)
//! plane. Vertices are stored counter-clockwise; the constructor normalizes
//! orientation and drops vertices that continue an edge in a straight line.

mod clip;
mod decompose;
mod minkowski;
mod triangulate;
mod union;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clip::{convex_intersection, intersection_area, symmetric_difference_area};
pub use decompose::{convex_decomposition, ConvexDecomposition};
pub use minkowski::{minkowski, minkowski_convex, minkowski_convex_points};
pub use triangulate::{triangulate, Triangulation};
pub use union::union_convex;

/// Points closer than this to the boundary count as inside.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Consecutive vertices closer than this are rejected as repeated.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon repeats vertex {0} consecutively")]
    RepeatedVertex(usize),
    #[error("polygon is not simple: edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon vertex {0} is not finite")]
    NonFinite(usize),
    #[error("polygon is not convex")]
    NotConvex,
    #[error("point ({p}, {q}) lies outside the polygon")]
    OutsidePolygon { p: f64, q: f64 },
    #[error("union of convex pieces encloses a hole")]
    UnionHasHole,
    #[error("union of convex pieces is disconnected")]
    UnionDisconnected,
    #[error("boundary tracing failed: {0}")]
    Tracing(String),
    #[error("empty region")]
    Empty,
}

/// A point (or delta) in the PQ plane, MW / Mvar.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Pq {
    pub p: f64,
    pub q: f64,
}

impl Pq {
    pub const ZERO: Pq = Pq { p: 0.0, q: 0.0 };

    pub const fn new(p: f64, q: f64) -> Self {
        Pq { p, q }
    }

    #[inline]
    pub fn cross(self, other: Pq) -> f64 {
        self.p * other.q - self.q * other.p
    }

    #[inline]
    pub fn dot(self, other: Pq) -> f64 {
        self.p * other.p + self.q * other.q
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Euclidean distance, evaluated as `sqrt(dp² + dq²)`.
    #[inline]
    pub fn distance(self, other: Pq) -> f64 {
        let dp = other.p - self.p;
        let dq = other.q - self.q;
        (dp * dp + dq * dq).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }
}

impl From<[f64; 2]> for Pq {
    fn from(v: [f64; 2]) -> Self {
        Pq::new(v[0], v[1])
    }
}

impl From<Pq> for [f64; 2] {
    fn from(v: Pq) -> Self {
        [v.p, v.q]
    }
}

impl Add for Pq {
    type Output = Pq;
    fn add(self, o: Pq) -> Pq {
        Pq::new(self.p + o.p, self.q + o.q)
    }
}

impl AddAssign for Pq {
    fn add_assign(&mut self, o: Pq) {
        self.p += o.p;
        self.q += o.q;
    }
}

impl Sub for Pq {
    type Output = Pq;
    fn sub(self, o: Pq) -> Pq {
        Pq::new(self.p - o.p, self.q - o.q)
    }
}

impl Mul<f64> for Pq {
    type Output = Pq;
    fn mul(self, s: f64) -> Pq {
        Pq::new(self.p * s, self.q * s)
    }
}

impl Neg for Pq {
    type Output = Pq;
    fn neg(self) -> Pq {
        Pq::new(-self.p, -self.q)
    }
}

impl fmt::Display for Pq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

/// Twice the signed area of triangle `abc`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Pq, b: Pq, c: Pq) -> f64 {
    (b - a).cross(c - a)
}

/// Closest point to `x` on the closed segment `ab`.
pub fn closest_on_segment(a: Pq, b: Pq, x: Pq) -> Pq {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return a;
    }
    let t = ((x - a).dot(d) / len2).clamp(0.0, 1.0);
    a + d * t
}

/// Shoelace area with sign (positive for counter-clockwise order).
pub fn signed_area(vertices: &[Pq]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * acc
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Pq,
    pub max: Pq,
}

impl BoundingBox {
    pub fn of(points: &[Pq]) -> Option<BoundingBox> {
        let first = *points.first()?;
        let mut bb = BoundingBox {
            min: first,
            max: first,
        };
        for v in &points[1..] {
            bb.min.p = bb.min.p.min(v.p);
            bb.min.q = bb.min.q.min(v.q);
            bb.max.p = bb.max.p.max(v.p);
            bb.max.q = bb.max.q.max(v.q);
        }
        Some(bb)
    }

    pub fn width(&self) -> f64 {
        self.max.p - self.min.p
    }

    pub fn height(&self) -> f64 {
        self.max.q - self.min.q
    }

    /// Larger of width and height.
    pub fn span(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(self.max)
    }
}

/// Simple polygon in the PQ plane, counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pq>", into = "Vec<Pq>")]
pub struct PqPolygon {
    vertices: Vec<Pq>,
}

impl TryFrom<Vec<Pq>> for PqPolygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Pq>) -> Result<Self, Self::Error> {
        PqPolygon::new(v)
    }
}

impl From<PqPolygon> for Vec<Pq> {
    fn from(p: PqPolygon) -> Self {
        p.vertices
    }
}

impl PqPolygon {
    /// Validates and normalizes a vertex ring.
    ///
    /// Rejects fewer than three vertices, repeated consecutive vertices,
    /// zero area and self-intersection. Clockwise input is reversed and
    /// straight-through vertices are removed.
    pub fn new(vertices: Vec<Pq>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if (a.p - b.p).abs() <= DUPLICATE_TOL && (a.q - b.q).abs() <= DUPLICATE_TOL {
                return Err(GeometryError::RepeatedVertex((i + 1) % n));
            }
        }
        let span = BoundingBox::of(&vertices).map(|b| b.span()).unwrap_or(0.0);
        let flat = vertices
            .iter()
            .all(|&v| orient(vertices[0], vertices[1], v).abs() <= 1e-14 * span * span);
        if flat {
            return Err(GeometryError::Degenerate);
        }
        check_simple(&vertices)?;
        let mut vertices = vertices;
        let area = signed_area(&vertices);
        if area.abs() <= 1e-14 * span * span || area == 0.0 {
            return Err(GeometryError::Degenerate);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let vertices = drop_straight_vertices(vertices);
        if vertices.len() < 3 {
            return Err(GeometryError::Degenerate);
        }
        Ok(PqPolygon { vertices })
    }

    /// Axis-aligned rectangle `[p0, p1] × [q0, q1]`.
    pub fn rectangle(p0: f64, p1: f64, q0: f64, q1: f64) -> Result<Self, GeometryError> {
        PqPolygon::new(vec![
            Pq::new(p0, q0),
            Pq::new(p1, q0),
            Pq::new(p1, q1),
            Pq::new(p0, q1),
        ])
    }

    pub fn vertices(&self) -> &[Pq] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Pq, Pq)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::of(&self.vertices).expect("polygon has vertices")
    }

    /// Area centroid.
    pub fn centroid(&self) -> Pq {
        let n = self.vertices.len();
        let mut c = Pq::ZERO;
        let mut a2 = 0.0;
        for i in 0..n {
            let u = self.vertices[i];
            let v = self.vertices[(i + 1) % n];
            let w = u.cross(v);
            a2 += w;
            c += (u + v) * w;
        }
        c * (1.0 / (3.0 * a2))
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let scale = self.bbox().span().max(f64::MIN_POSITIVE);
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            orient(a, b, c) >= -1e-12 * scale * scale
        })
    }

    /// Membership by ray casting; points within [`BOUNDARY_TOL`] of an edge count as inside.
    pub fn contains(&self, x: Pq) -> bool {
        if self.distance_to_boundary(x) <= BOUNDARY_TOL {
            return true;
        }
        self.contains_strict_parity(x)
    }

    /// Even-odd crossing test against a horizontal ray towards +p.
    fn contains_strict_parity(&self, x: Pq) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let vi = self.vertices[i];
            let vj = self.vertices[j];
            if (vi.q > x.q) != (vj.q > x.q) {
                let p_cross = (vj.p - vi.p) * (x.q - vi.q) / (vj.q - vi.q) + vi.p;
                if x.p < p_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, x: Pq) -> f64 {
        self.edges()
            .map(|(a, b)| closest_on_segment(a, b, x).distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Set-to-limit: points outside are moved to the nearest boundary point.
    ///
    /// The nearest point is either a vertex or the orthogonal foot on an edge.
    /// Equidistant candidates resolve to the lowest edge index. Inside points
    /// are returned unchanged.
    pub fn project(&self, x: Pq) -> Pq {
        if self.contains(x) {
            return x;
        }
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let c = closest_on_segment(a, b, x);
            let d = c.distance(x);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn translate(&self, delta: Pq) -> PqPolygon {
        PqPolygon {
            vertices: self.vertices.iter().map(|&v| v + delta).collect(),
        }
    }

    /// Scales every vertex about the origin. `factor` must be positive.
    pub fn scale(&self, factor: f64) -> PqPolygon {
        assert!(factor > 0.0, "scale factor must be positive");
        PqPolygon {
            vertices: self.vertices.iter().map(|&v| v * factor).collect(),
        }
    }

    /// Point reflection through the origin.
    pub fn negate(&self) -> PqPolygon {
        PqPolygon {
            vertices: self.vertices.iter().map(|&v| -v).collect(),
        }
    }

    /// Shifts the polygon so that the operating point `(p_op, q_op)` becomes the origin.
    pub fn recenter(&self, p_op: f64, q_op: f64) -> Result<PqPolygon, GeometryError> {
        let op = Pq::new(p_op, q_op);
        if !self.contains(op) {
            return Err(GeometryError::OutsidePolygon { p: p_op, q: q_op });
        }
        Ok(self.translate(-op))
    }
}

fn drop_straight_vertices(mut v: Vec<Pq>) -> Vec<Pq> {
    loop {
        let n = v.len();
        if n < 3 {
            return v;
        }
        let mut removed = false;
        for i in 0..n {
            let a = v[(i + n - 1) % n];
            let b = v[i];
            let c = v[(i + 1) % n];
            let e1 = b - a;
            let e2 = c - b;
            if e1.cross(e2).abs() <= 1e-12 * e1.norm() * e2.norm() && e1.dot(e2) > 0.0 {
                v.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            return v;
        }
    }
}

fn on_segment(a: Pq, b: Pq, x: Pq, tol: f64) -> bool {
    closest_on_segment(a, b, x).distance(x) <= tol
}

/// Closed-segment intersection test with an absolute tolerance.
pub(crate) fn segments_touch(a: Pq, b: Pq, c: Pq, d: Pq, tol: f64) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    on_segment(a, b, c, tol)
        || on_segment(a, b, d, tol)
        || on_segment(c, d, a, tol)
        || on_segment(c, d, b, tol)
}

fn check_simple(v: &[Pq]) -> Result<(), GeometryError> {
    let n = v.len();
    let span = BoundingBox::of(v).map(|b| b.span()).unwrap_or(1.0);
    let tol = 1e-12 * span.max(1e-300);
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        // adjacent edge folding back onto this one
        let c = v[(i + 2) % n];
        let e1 = b - a;
        let e2 = c - b;
        if e1.cross(e2).abs() <= 1e-12 * e1.norm() * e2.norm() && e1.dot(e2) < 0.0 {
            return Err(GeometryError::SelfIntersecting(i, (i + 1) % n));
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let c = v[j];
            let d = v[(j + 1) % n];
            if segments_touch(a, b, c, d, tol) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}
