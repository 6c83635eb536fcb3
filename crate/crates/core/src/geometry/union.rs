//! Boundary of the union of convex polygons.
//!
//! All edges are split at mutual intersections, fragments whose right-hand
//! side lies inside some piece are discarded and the remaining directed
//! fragments are chained into loops.

use std::collections::HashMap;

use super::{closest_on_segment, orient, signed_area, BoundingBox, GeometryError, Pq, PqPolygon};

struct VertexPool {
    points: Vec<Pq>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    cell: f64,
    tol: f64,
}

impl VertexPool {
    fn new(tol: f64) -> Self {
        VertexPool {
            points: Vec::new(),
            cells: HashMap::new(),
            cell: tol * 4.0,
            tol,
        }
    }

    fn key(&self, x: Pq) -> (i64, i64) {
        ((x.p / self.cell).floor() as i64, (x.q / self.cell).floor() as i64)
    }

    fn insert(&mut self, x: Pq) -> usize {
        let (kx, ky) = self.key(x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if self.points[id].distance(x) <= self.tol {
                            return id;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(x);
        self.cells.entry((kx, ky)).or_default().push(id);
        id
    }
}

fn strictly_inside_convex(poly: &PqPolygon, x: Pq) -> bool {
    poly.edges().all(|(a, b)| orient(a, b, x) > 0.0)
}

fn boxes_overlap(a: (Pq, Pq), b: (Pq, Pq), tol: f64) -> bool {
    a.0.p.min(a.1.p) <= b.0.p.max(b.1.p) + tol
        && b.0.p.min(b.1.p) <= a.0.p.max(a.1.p) + tol
        && a.0.q.min(a.1.q) <= b.0.q.max(b.1.q) + tol
        && b.0.q.min(b.1.q) <= a.0.q.max(a.1.q) + tol
}

/// Parameter of `x` along `a→b`, if `x` lies on the segment within `tol`.
fn param_on(a: Pq, b: Pq, x: Pq, tol: f64) -> Option<f64> {
    let c = closest_on_segment(a, b, x);
    if c.distance(x) > tol {
        return None;
    }
    let d = b - a;
    Some(((x - a).dot(d) / d.dot(d)).clamp(0.0, 1.0))
}

/// Union of convex counter-clockwise polygons as a single simple polygon.
///
/// Fails with [`GeometryError::UnionHasHole`] or
/// [`GeometryError::UnionDisconnected`] when the union is not simply connected.
pub fn union_convex(pieces: &[PqPolygon]) -> Result<PqPolygon, GeometryError> {
    match pieces.len() {
        0 => return Err(GeometryError::Empty),
        1 => return Ok(pieces[0].clone()),
        _ => {}
    }
    let all: Vec<Pq> = pieces.iter().flat_map(|p| p.vertices().iter().copied()).collect();
    let bb = BoundingBox::of(&all).ok_or(GeometryError::Empty)?;
    let scale = bb.span().max(1.0);
    let tol = 1e-9 * scale;
    let h = 1e-7 * scale;

    let edges: Vec<(Pq, Pq)> = pieces.iter().flat_map(|p| p.edges()).collect();
    let mut pool = VertexPool::new(tol);
    let mut kept: Vec<(usize, usize)> = Vec::new();

    for (ei, &(a, b)) in edges.iter().enumerate() {
        let mut ts = vec![0.0, 1.0];
        let r = b - a;
        for (ej, &(c, d)) in edges.iter().enumerate() {
            if ei == ej || !boxes_overlap((a, b), (c, d), tol) {
                continue;
            }
            let s = d - c;
            let denom = r.cross(s);
            if denom.abs() > 1e-12 * r.norm() * s.norm() {
                let t = (c - a).cross(s) / denom;
                let u = (c - a).cross(r) / denom;
                if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
                    ts.push(t.clamp(0.0, 1.0));
                }
            }
            for x in [c, d] {
                if let Some(t) = param_on(a, b, x, tol) {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let ids: Vec<usize> = ts.iter().map(|&t| pool.insert(a + r * t)).collect();
        let normal = Pq::new(-r.q, r.p) * (1.0 / r.norm());
        for w in ids.windows(2) {
            let (u, v) = (w[0], w[1]);
            if u == v {
                continue;
            }
            let pu = pool.points[u];
            let pv = pool.points[v];
            let mid = (pu + pv) * 0.5;
            let right = mid - normal * h;
            if pieces.iter().any(|p| strictly_inside_convex(p, right)) {
                continue;
            }
            kept.push((u, v));
        }
    }
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() {
        return Err(GeometryError::Tracing("no boundary fragments".into()));
    }

    let pts = &pool.points;
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &(u, _)) in kept.iter().enumerate() {
        outgoing.entry(u).or_default().push(k);
    }
    let mut used = vec![false; kept.len()];
    let mut loops: Vec<Vec<Pq>> = Vec::new();
    for start in 0..kept.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let (u, v) = kept[cur];
            ring.push(pts[u]);
            let back = pts[u] - pts[v];
            let cands = outgoing
                .get(&v)
                .ok_or_else(|| GeometryError::Tracing(format!("dead end at {}", pts[v])))?;
            // first outgoing fragment clockwise from the reversed incoming one
            let mut best: Option<(usize, f64)> = None;
            for &k in cands {
                let w = kept[k].1;
                let dir = pts[w] - pts[v];
                let mut ang = back.cross(dir).atan2(back.dot(dir));
                if ang <= 0.0 {
                    ang += std::f64::consts::TAU;
                }
                // clockwise angle from `back` is TAU - ccw angle
                let cw = std::f64::consts::TAU - ang;
                let cw = if w == u { std::f64::consts::TAU } else { cw };
                if best.is_none_or(|(_, c)| cw < c) {
                    best = Some((k, cw));
                }
            }
            let (next, _) = best.expect("non-empty candidate list");
            if next == start {
                break;
            }
            if used[next] {
                return Err(GeometryError::Tracing("fragment reused".into()));
            }
            cur = next;
        }
        loops.push(ring);
    }

    let area_eps = 1e-12 * scale * scale;
    let mut outer: Vec<Vec<Pq>> = Vec::new();
    for ring in loops {
        let a = signed_area(&ring);
        if a.abs() <= area_eps {
            continue;
        }
        if a < 0.0 {
            return Err(GeometryError::UnionHasHole);
        }
        outer.push(ring);
    }
    match outer.len() {
        0 => Err(GeometryError::Tracing("no outer loop".into())),
        1 => PqPolygon::new(outer.pop().unwrap()),
        _ => Err(GeometryError::UnionDisconnected),
    }
}
