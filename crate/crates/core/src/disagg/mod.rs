//! Aggregation of co-located units, cost-optimal disaggregation and
//! premonetized cost surfaces.

mod milp;
pub mod simplex;
mod surface;

use thiserror::Error;

use crate::geometry::{convex_decomposition, minkowski, minkowski_convex, GeometryError, Pq, PqPolygon};
use crate::grid::{Fpu, GridModel};
use crate::market::{cost_of_delta, CostMode, SignedFactors};

pub use milp::{
    solve_disaggregation, Assignment, DisaggregationResult, Member, MilpOptions, SolveStatus,
    DEFAULT_NODE_LIMIT,
};
pub use surface::{premonetize, AggregatedCostSurface, SurfaceOptions};

/// Above this many piece combinations the explicit combination list is not built.
pub const MAX_COMBINATIONS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisaggError {
    #[error("no units to aggregate")]
    NoMembers,
    #[error("duration must be positive, got {0}")]
    Duration(f64),
    #[error("branch and bound exceeded {0} nodes")]
    NodeLimit(usize),
    #[error("solution check failed: {0}")]
    Verification(String),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("point {0} lies outside the aggregated polygon")]
    OutsideAggregate(Pq),
    #[error("demand {point} is infeasible at bus {bus}")]
    Infeasible { bus: usize, point: Pq },
    #[error("surface needs resolution >= 2, got {0}")]
    Resolution(usize),
    #[error("too many piece combinations ({0})")]
    TooManyCombinations(usize),
}

/// All units of one bus merged into a single flexibility polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFpu {
    pub bus: usize,
    pub members: Vec<Member>,
    /// Minkowski sum of the member deviation polygons.
    pub polygon: PqPolygon,
    /// Convex sums of one piece per member; their union is `polygon`.
    pub combination_pieces: Vec<PqPolygon>,
}

impl AggregatedFpu {
    pub fn member_ids(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn is_single(&self) -> bool {
        self.members.len() == 1
    }

    /// Whether every member polygon is convex (no integer choices).
    pub fn all_convex(&self) -> bool {
        self.members.iter().all(|m| m.pieces.len() == 1)
    }

    /// Disaggregates `demand`; points outside the aggregate are infeasible.
    pub fn solve(&self, demand: Pq, d: f64, opts: &MilpOptions) -> Result<DisaggregationResult, DisaggError> {
        solve_disaggregation(&self.members, demand, d, opts)
    }
}

/// Builds a member from a unit: deviation polygon, convex pieces and prices.
pub fn member_from_fpu(fpu: &Fpu, mode: CostMode) -> Result<Member, DisaggError> {
    let polygon = fpu.delta_polygon()?;
    let pieces = convex_decomposition(&polygon)?.pieces;
    Ok(Member {
        id: fpu.id.clone(),
        polygon,
        pieces,
        price: fpu.cost.resolve(mode),
    })
}

/// Aggregates the given members in list order.
pub fn aggregate_members(bus: usize, members: Vec<Member>) -> Result<AggregatedFpu, DisaggError> {
    let first = members.first().ok_or(DisaggError::NoMembers)?;
    let mut polygon = first.polygon.clone();
    for m in &members[1..] {
        polygon = minkowski(&polygon, &m.polygon)?;
    }
    let combos: usize = members.iter().map(|m| m.pieces.len()).product();
    let combination_pieces = if combos <= MAX_COMBINATIONS {
        combination_sums(&members)?
    } else {
        Vec::new()
    };
    Ok(AggregatedFpu {
        bus,
        members,
        polygon,
        combination_pieces,
    })
}

fn combination_sums(members: &[Member]) -> Result<Vec<PqPolygon>, DisaggError> {
    let mut acc: Vec<PqPolygon> = members[0].pieces.clone();
    for m in &members[1..] {
        let mut next = Vec::with_capacity(acc.len() * m.pieces.len());
        for a in &acc {
            for b in &m.pieces {
                next.push(minkowski_convex(a, b)?);
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Aggregates all units connected to `bus`.
pub fn aggregate(grid: &GridModel, bus: usize, mode: CostMode) -> Result<AggregatedFpu, DisaggError> {
    let members = grid
        .fpus_at(bus)
        .into_iter()
        .map(|f| member_from_fpu(f, mode))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_members(bus, members)
}

/// Cost lookup for one bus during sampling.
#[derive(Debug, Clone)]
pub enum BusPricer {
    /// A single unit: its own linear price.
    Single { price: SignedFactors },
    /// Interpolated premonetized surface.
    Surface(Box<AggregatedCostSurface>),
    /// Fresh branch-and-bound solve per query.
    Exact(Box<AggregatedFpu>),
}

impl BusPricer {
    /// Service cost of a bus deviation for duration `d`.
    pub fn cost(&self, delta: Pq, d: f64) -> Result<f64, DisaggError> {
        match self {
            BusPricer::Single { price } => Ok(cost_of_delta(delta, price, d)),
            BusPricer::Surface(s) => Ok(s.eval_cost(delta)? * d / s.duration),
            BusPricer::Exact(agg) => {
                let r = agg.solve(delta, d, &MilpOptions::default())?;
                match r.status {
                    SolveStatus::Optimal => Ok(r.total_cost),
                    SolveStatus::Infeasible => Err(DisaggError::Infeasible {
                        bus: agg.bus,
                        point: delta,
                    }),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::symmetric_difference_area;

    fn member(id: &str, poly: PqPolygon) -> Member {
        Member {
            id: id.into(),
            pieces: convex_decomposition(&poly).unwrap().pieces,
            polygon: poly,
            price: SignedFactors::symmetric(1.0, 1.0),
        }
    }

    fn l_shape() -> PqPolygon {
        PqPolygon::new(vec![
            Pq::new(-1.0, -1.0),
            Pq::new(1.0, -1.0),
            Pq::new(1.0, 0.3),
            Pq::new(0.2, 0.3),
            Pq::new(0.2, 1.0),
            Pq::new(-1.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn single_member_is_identity() {
        let p = PqPolygon::rectangle(-1.0, 2.0, -0.5, 0.5).unwrap();
        let agg = aggregate_members(3, vec![member("a", p.clone())]).unwrap();
        assert_eq!(agg.polygon, p);
        assert!(agg.is_single());
    }

    #[test]
    fn order_does_not_matter() {
        let a = member("a", l_shape());
        let b = member("b", PqPolygon::rectangle(-0.3, 0.3, -0.2, 0.2).unwrap());
        let c = member("c", PqPolygon::new(vec![Pq::new(-0.5, -0.5), Pq::new(0.5, 0.0), Pq::new(0.0, 0.6)]).unwrap());
        let x = aggregate_members(1, vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let y = aggregate_members(1, vec![c, a, b]).unwrap();
        let sd = symmetric_difference_area(&x.polygon, &y.polygon).unwrap();
        assert!(sd < 1e-9 * x.polygon.area());
        // the union of combination pieces has the same area
        assert_eq!(x.combination_pieces.len(), 2);
        let u = crate::geometry::union_convex(&x.combination_pieces).unwrap();
        assert!((u.area() - x.polygon.area()).abs() < 1e-9);
    }
}
