//! Premonetized cost surface of an aggregated unit.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use spade::{DelaunayTriangulation, HasPosition, Point2, PositionInTriangulation, Triangulation};

use super::milp::{MilpOptions, SolveStatus};
use super::{AggregatedFpu, DisaggError};
use crate::geometry::{closest_on_segment, Pq};

#[derive(Debug, Clone, Copy)]
struct SurfaceVertex {
    pos: Point2<f64>,
    cost: f64,
}

impl HasPosition for SurfaceVertex {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceOptions {
    /// Grid points per axis over the bounding box.
    pub resolution: usize,
    /// Duration the costs are computed for, hours.
    pub duration: f64,
    pub milp: MilpOptions,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            resolution: 100,
            duration: 1.0,
            milp: MilpOptions::default(),
        }
    }
}

/// Tabulated optimal disaggregation cost with linear interpolation.
#[derive(Debug, Clone)]
pub struct AggregatedCostSurface {
    pub bus: usize,
    pub points: Vec<Pq>,
    pub costs: Vec<f64>,
    pub duration: f64,
    polygon: crate::geometry::PqPolygon,
    tri: DelaunayTriangulation<SurfaceVertex>,
}

fn scatter_points(agg: &AggregatedFpu, resolution: usize) -> Vec<Pq> {
    let bb = agg.polygon.bbox();
    let mut pts = Vec::with_capacity(resolution * resolution);
    let n = (resolution - 1) as f64;
    for j in 0..resolution {
        for i in 0..resolution {
            let x = Pq::new(
                bb.min.p + bb.width() * i as f64 / n,
                bb.min.q + bb.height() * j as f64 / n,
            );
            if agg.polygon.contains(x) {
                pts.push(x);
            }
        }
    }
    for piece in &agg.combination_pieces {
        pts.extend_from_slice(piece.vertices());
    }
    pts.extend_from_slice(agg.polygon.vertices());
    pts.push(Pq::ZERO);

    // drop coincident points, keep first occurrence
    let cell = 1e-9 * bb.span().max(1e-300);
    let mut seen = HashMap::new();
    pts.retain(|x| {
        let key = ((x.p / cell).round() as i64, (x.q / cell).round() as i64);
        seen.insert(key, ()).is_none()
    });
    pts
}

/// Solves the disaggregation on a scatter over the aggregate and builds the
/// interpolating surface.
///
/// The scatter is a `resolution × resolution` grid over the bounding box,
/// clipped to the polygon, plus all vertices of the piece combinations, of
/// the aggregate, and the origin. Boundary points that come out infeasible
/// by rounding are moved slightly towards the origin and re-solved.
pub fn premonetize(agg: &AggregatedFpu, opts: &SurfaceOptions) -> Result<AggregatedCostSurface, DisaggError> {
    if opts.resolution < 2 {
        return Err(DisaggError::Resolution(opts.resolution));
    }
    let span = agg.polygon.bbox().span();
    let pts = scatter_points(agg, opts.resolution);
    let solved: Vec<Result<(Pq, f64), DisaggError>> = pts
        .par_iter()
        .map(|&x| {
            let mut y = x;
            for attempt in 0..4 {
                let r = agg.solve(y, opts.duration, &opts.milp)?;
                if r.status == SolveStatus::Optimal {
                    return Ok((y, r.total_cost));
                }
                let step = 1e-6 * span * (1u32 << (2 * attempt)) as f64;
                let len = x.norm();
                if len <= step {
                    y = Pq::ZERO;
                } else {
                    y = x * (1.0 - step / len);
                }
            }
            Err(DisaggError::Infeasible { bus: agg.bus, point: x })
        })
        .collect();

    let mut points = Vec::with_capacity(solved.len());
    let mut costs = Vec::with_capacity(solved.len());
    for r in solved {
        let (x, c) = r?;
        points.push(x);
        costs.push(c);
    }
    let mut tri = DelaunayTriangulation::<SurfaceVertex>::new();
    let mut kept_points = Vec::with_capacity(points.len());
    let mut kept_costs = Vec::with_capacity(points.len());
    for (x, c) in points.into_iter().zip(costs) {
        let before = tri.num_vertices();
        tri.insert(SurfaceVertex {
            pos: Point2::new(x.p, x.q),
            cost: c,
        })
        .map_err(|e| DisaggError::Verification(format!("surface vertex {x}: {e:?}")))?;
        // snapped points may coincide with an existing vertex
        if tri.num_vertices() > before {
            kept_points.push(x);
            kept_costs.push(c);
        }
    }
    Ok(AggregatedCostSurface {
        bus: agg.bus,
        points: kept_points,
        costs: kept_costs,
        duration: opts.duration,
        polygon: agg.polygon.clone(),
        tri,
    })
}

impl AggregatedCostSurface {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interpolated cost at a bus deviation; exact at scatter points.
    pub fn eval_cost(&self, delta: Pq) -> Result<f64, DisaggError> {
        if !self.polygon.contains(delta) {
            return Err(DisaggError::OutsideAggregate(delta));
        }
        let q = Point2::new(delta.p, delta.q);
        let at = |p: Point2<f64>| Pq::new(p.x, p.y);
        let on_segment = |a: SurfaceVertex, b: SurfaceVertex| {
            let (pa, pb) = (at(a.pos), at(b.pos));
            let c = closest_on_segment(pa, pb, delta);
            let len = pa.distance(pb);
            let t = if len > 0.0 { pa.distance(c) / len } else { 0.0 };
            a.cost + (b.cost - a.cost) * t
        };
        match self.tri.locate(q) {
            PositionInTriangulation::OnVertex(v) => Ok(self.tri.vertex(v).data().cost),
            PositionInTriangulation::OnEdge(e) => {
                let e = self.tri.directed_edge(e);
                Ok(on_segment(*e.from().data(), *e.to().data()))
            }
            PositionInTriangulation::OnFace(f) => {
                let [a, b, c] = self.tri.face(f).vertices();
                let (pa, pb, pc) = (at(a.position()), at(b.position()), at(c.position()));
                let area = crate::geometry::orient(pa, pb, pc);
                let wa = crate::geometry::orient(delta, pb, pc) / area;
                let wb = crate::geometry::orient(pa, delta, pc) / area;
                let wc = 1.0 - wa - wb;
                Ok(wa * a.data().cost + wb * b.data().cost + wc * c.data().cost)
            }
            PositionInTriangulation::OutsideOfConvexHull(_) => {
                // within boundary tolerance of the polygon but just outside the
                // scatter hull: use the nearest hull edge
                let mut best = (f64::INFINITY, 0.0);
                for e in self.tri.convex_hull() {
                    let (a, b) = (*e.from().data(), *e.to().data());
                    let c = closest_on_segment(at(a.pos), at(b.pos), delta);
                    let d = c.distance(delta);
                    if d < best.0 {
                        best = (d, on_segment(a, b));
                    }
                }
                Ok(best.1)
            }
            PositionInTriangulation::NoTriangulation => self
                .points
                .iter()
                .zip(&self.costs)
                .min_by(|x, y| x.0.distance(delta).total_cmp(&y.0.distance(delta)))
                .map(|(_, &c)| c)
                .ok_or(DisaggError::OutsideAggregate(delta)),
        }
    }

    /// Triangles as indices into `points`.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        self.tri
            .inner_faces()
            .map(|f| {
                let [a, b, c] = f.vertices();
                [a.fix().index(), b.fix().index(), c.fix().index()]
            })
            .collect()
    }

    /// Triangle index containing `delta`, if it falls strictly inside one.
    pub fn cell_of(&self, delta: Pq) -> Option<[Pq; 3]> {
        match self.tri.locate(Point2::new(delta.p, delta.q)) {
            PositionInTriangulation::OnFace(f) => {
                let [a, b, c] = self.tri.face(f).vertices();
                let at = |p: Point2<f64>| Pq::new(p.x, p.y);
                Some([at(a.position()), at(b.position()), at(c.position())])
            }
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dp_mw,dq_mvar,cost_eur\n");
        for (x, c) in self.points.iter().zip(&self.costs) {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", x.p, x.q, c);
        }
        out
    }

    pub fn triangles_csv(&self) -> String {
        let mut out = String::from("a,b,c\n");
        for [a, b, c] in self.triangles() {
            let _ = writeln!(out, "{a},{b},{c}");
        }
        out
    }
}
