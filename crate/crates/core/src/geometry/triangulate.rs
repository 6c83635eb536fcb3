//! Polygon triangulation and area-weighted uniform sampling.

use rand::Rng;

use super::{orient, GeometryError, Pq, PqPolygon};

/// Triangles of a simple polygon together with cumulative normalized areas.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub triangles: Vec<[Pq; 3]>,
    /// Absolute triangle areas.
    pub areas: Vec<f64>,
    /// `cum_areas[0] = 0`, `cum_areas[m] = 1`, non-decreasing.
    pub cum_areas: Vec<f64>,
}

/// Absolute area of the triangle spanned by the three points.
pub fn triangle_area(t: &[Pq; 3]) -> f64 {
    let [a, b, c] = *t;
    0.5 * ((a.p - c.p) * (b.q - c.q) - (b.p - c.p) * (a.q - c.q)).abs()
}

impl Triangulation {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Index of the triangle selected by `r ∈ [0, 1)`, i.e. the `w` with
    /// `cum_areas[w-1] <= r < cum_areas[w]`, returned zero-based.
    pub fn pick(&self, r: f64) -> usize {
        let w = self.cum_areas.partition_point(|&c| c <= r);
        w.clamp(1, self.triangles.len()) - 1
    }

    /// Point inside triangle `pick(rt)` from two uniforms; the draws are
    /// ordered so that the barycentric weights are non-negative.
    pub fn point_from_draws(&self, rt: f64, r1: f64, r2: f64) -> Pq {
        let [p1, p2, p3] = self.triangles[self.pick(rt)];
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        p1 * lo + p2 * (hi - lo) + p3 * (1.0 - hi)
    }

    /// Uniform draw over the triangulated area.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Pq {
        let rt: f64 = rng.random();
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        self.point_from_draws(rt, r1, r2)
    }
}

/// Triangulates a simple polygon by ear clipping, then improves triangle
/// shapes with Delaunay edge flips restricted to interior diagonals.
pub fn triangulate(poly: &PqPolygon) -> Result<Triangulation, GeometryError> {
    let v = poly.vertices();
    let mut idx = ear_clip(v)?;
    lawson_flips(v, &mut idx);
    let triangles: Vec<[Pq; 3]> = idx.iter().map(|t| [v[t[0]], v[t[1]], v[t[2]]]).collect();
    let areas: Vec<f64> = triangles.iter().map(triangle_area).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(GeometryError::Degenerate);
    }
    let mut cum_areas = Vec::with_capacity(areas.len() + 1);
    cum_areas.push(0.0);
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cum_areas.push(acc / total);
    }
    *cum_areas.last_mut().unwrap() = 1.0;
    Ok(Triangulation {
        triangles,
        areas,
        cum_areas,
    })
}

fn point_in_triangle(a: Pq, b: Pq, c: Pq, x: Pq) -> bool {
    orient(a, b, x) >= 0.0 && orient(b, c, x) >= 0.0 && orient(c, a, x) >= 0.0
}

fn ear_clip(v: &[Pq]) -> Result<Vec<[usize; 3]>, GeometryError> {
    let mut ring: Vec<usize> = (0..v.len()).collect();
    let mut out = Vec::with_capacity(v.len() - 2);
    while ring.len() > 3 {
        let m = ring.len();
        let mut clipped = false;
        // prefer the ear with the best-shaped triangle to keep slivers rare
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = ring[(i + m - 1) % m];
            let b = ring[i];
            let c = ring[(i + 1) % m];
            if orient(v[a], v[b], v[c]) <= 0.0 {
                continue;
            }
            let blocked = ring.iter().any(|&k| {
                k != a && k != b && k != c && point_in_triangle(v[a], v[b], v[c], v[k])
            });
            if blocked {
                continue;
            }
            let quality = shape_quality(v[a], v[b], v[c]);
            if best.is_none_or(|(_, q)| quality > q) {
                best = Some((i, quality));
            }
        }
        if let Some((i, _)) = best {
            let a = ring[(i + m - 1) % m];
            let b = ring[i];
            let c = ring[(i + 1) % m];
            out.push([a, b, c]);
            ring.remove(i);
            clipped = true;
        }
        if !clipped {
            return Err(GeometryError::Tracing("no ear found".into()));
        }
    }
    out.push([ring[0], ring[1], ring[2]]);
    Ok(out)
}

fn shape_quality(a: Pq, b: Pq, c: Pq) -> f64 {
    let area2 = orient(a, b, c).abs();
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let longest = ab.max(bc).max(ca);
    // shape measure: tends to zero for slivers
    area2 / (longest * longest)
}

fn in_circumcircle(a: Pq, b: Pq, c: Pq, d: Pq) -> bool {
    let ad = a - d;
    let bd = b - d;
    let cd = c - d;
    let det = (ad.dot(ad)) * bd.cross(cd) - (bd.dot(bd)) * ad.cross(cd) + (cd.dot(cd)) * ad.cross(bd);
    det > 1e-12 * (ad.dot(ad) + bd.dot(bd) + cd.dot(cd)).powi(2)
}

fn lawson_flips(v: &[Pq], tris: &mut [[usize; 3]]) {
    let max_passes = 4 * tris.len() + 8;
    for _ in 0..max_passes {
        let mut flipped = false;
        'outer: for t1 in 0..tris.len() {
            for e in 0..3 {
                let i = tris[t1][e];
                let j = tris[t1][(e + 1) % 3];
                let k = tris[t1][(e + 2) % 3];
                for t2 in 0..tris.len() {
                    if t2 == t1 {
                        continue;
                    }
                    let tr = tris[t2];
                    for f in 0..3 {
                        if tr[f] == j && tr[(f + 1) % 3] == i {
                            let l = tr[(f + 2) % 3];
                            if in_circumcircle(v[i], v[j], v[k], v[l])
                                && orient(v[l], v[j], v[k]) > 0.0
                                && orient(v[k], v[i], v[l]) > 0.0
                            {
                                tris[t1] = [l, j, k];
                                tris[t2] = [k, i, l];
                                flipped = true;
                                continue 'outer;
                            }
                        }
                    }
                }
            }
        }
        if !flipped {
            break;
        }
    }
}
