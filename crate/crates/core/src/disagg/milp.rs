//! Cost-optimal split of a bus demand onto the units at that bus.
//!
//! Each member's deviation must lie in one of its convex pieces. The mixed
//! problem is solved by best-first branch and bound over piece selections,
//! with the piece choice relaxed to convex weights over all piece vertices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{solve_lp, LpStatus};
use super::DisaggError;
use crate::geometry::{orient, Pq, PqPolygon};
use crate::market::{cost_of_delta, SignedFactors};

pub const DEFAULT_NODE_LIMIT: usize = 100_000;

/// Integrality tolerance on piece weights.
const INTEGRALITY_TOL: f64 = 1e-6;

/// One unit as seen by the disaggregation: its deviation polygon (origin at
/// the operating point), convex pieces covering it and prices.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    pub polygon: PqPolygon,
    pub pieces: Vec<PqPolygon>,
    pub price: SignedFactors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub id: String,
    pub delta: Pq,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggregationResult {
    pub status: SolveStatus,
    pub assignments: Vec<Assignment>,
    pub total_cost: f64,
    pub nodes: usize,
    /// Root relaxation value; a lower bound on `total_cost`.
    pub root_bound: f64,
}

impl DisaggregationResult {
    fn infeasible(nodes: usize) -> Self {
        DisaggregationResult {
            status: SolveStatus::Infeasible,
            assignments: Vec::new(),
            total_cost: f64::INFINITY,
            nodes,
            root_bound: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MilpOptions {
    pub node_limit: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

struct NodeLp {
    bound: f64,
    points: Vec<Pq>,
    /// Relaxed piece weights per member.
    weights: Vec<Vec<f64>>,
}

/// Relaxation with only `allowed` pieces, costs at unit duration.
fn solve_node(members: &[Member], allowed: &[Vec<bool>], demand: Pq) -> Option<NodeLp> {
    // column layout: per member [λ over allowed piece vertices..., dp+, dp-, dq+, dq-]
    let k = members.len();
    let mut col_owner: Vec<(usize, usize, Pq)> = Vec::new();
    let mut member_cols: Vec<(usize, usize)> = Vec::with_capacity(k);
    for (i, m) in members.iter().enumerate() {
        let start = col_owner.len();
        for (s, piece) in m.pieces.iter().enumerate() {
            if !allowed[i][s] {
                continue;
            }
            for &v in piece.vertices() {
                col_owner.push((i, s, v));
            }
        }
        member_cols.push((start, col_owner.len()));
    }
    let n_lambda = col_owner.len();
    let n = n_lambda + 4 * k;
    let rows = 3 * k + 2;
    let mut a = vec![vec![0.0; n]; rows];
    let mut b = vec![0.0; rows];
    let mut c = vec![0.0; n];
    for (col, &(i, _, v)) in col_owner.iter().enumerate() {
        a[3 * i][col] = 1.0;
        a[3 * i + 1][col] = v.p;
        a[3 * i + 2][col] = v.q;
    }
    for (i, m) in members.iter().enumerate() {
        b[3 * i] = 1.0;
        let base = n_lambda + 4 * i;
        a[3 * i + 1][base] = -1.0;
        a[3 * i + 1][base + 1] = 1.0;
        a[3 * i + 2][base + 2] = -1.0;
        a[3 * i + 2][base + 3] = 1.0;
        a[3 * k][base] = 1.0;
        a[3 * k][base + 1] = -1.0;
        a[3 * k + 1][base + 2] = 1.0;
        a[3 * k + 1][base + 3] = -1.0;
        c[base] = m.price.p_plus;
        c[base + 1] = m.price.p_minus;
        c[base + 2] = m.price.q_plus;
        c[base + 3] = m.price.q_minus;
    }
    b[3 * k] = demand.p;
    b[3 * k + 1] = demand.q;

    let sol = solve_lp(&a, &b, &c);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut points = vec![Pq::ZERO; k];
    let mut weights: Vec<Vec<f64>> = members.iter().map(|m| vec![0.0; m.pieces.len()]).collect();
    for (i, &(lo, hi)) in member_cols.iter().enumerate() {
        let mut p = Pq::ZERO;
        for col in lo..hi {
            let (_, s, v) = col_owner[col];
            let l = sol.x[col];
            p += v * l;
            weights[i][s] += l;
        }
        points[i] = p;
    }
    Some(NodeLp {
        bound: sol.objective,
        points,
        weights,
    })
}

fn in_convex(piece: &PqPolygon, x: Pq, tol: f64) -> bool {
    piece.edges().all(|(a, b)| {
        let len = a.distance(b);
        orient(a, b, x) >= -tol * len
    })
}

#[derive(Debug)]
struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    allowed: Vec<Vec<bool>>,
    lp: NodeLpStored,
}

#[derive(Debug)]
struct NodeLpStored {
    points: Vec<Pq>,
    weights: Vec<Vec<f64>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: lowest bound first, then deeper, then earlier
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Minimum-cost assignment of `demand` over `members` for duration `d`.
///
/// Returns [`SolveStatus::Infeasible`] when no split exists. Exceeding the
/// node limit is an error rather than a suboptimal answer.
pub fn solve_disaggregation(
    members: &[Member],
    demand: Pq,
    d: f64,
    opts: &MilpOptions,
) -> Result<DisaggregationResult, DisaggError> {
    if members.is_empty() {
        return Err(DisaggError::NoMembers);
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(DisaggError::Duration(d));
    }
    if demand == Pq::ZERO {
        return Ok(DisaggregationResult {
            status: SolveStatus::Optimal,
            assignments: members
                .iter()
                .map(|m| Assignment {
                    id: m.id.clone(),
                    delta: Pq::ZERO,
                    cost: 0.0,
                })
                .collect(),
            total_cost: 0.0,
            nodes: 1,
            root_bound: 0.0,
        });
    }
    let scale = members
        .iter()
        .map(|m| m.polygon.bbox().span())
        .fold(0.0f64, f64::max)
        .max(demand.norm())
        .max(1e-300);
    let member_tol = 1e-12 * scale;

    let root_allowed: Vec<Vec<bool>> = members.iter().map(|m| vec![true; m.pieces.len()]).collect();
    let mut nodes = 1usize;
    let Some(root) = solve_node(members, &root_allowed, demand) else {
        return Ok(DisaggregationResult::infeasible(nodes));
    };
    let root_bound = root.bound;
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bound: root.bound,
        depth: 0,
        seq,
        allowed: root_allowed,
        lp: NodeLpStored {
            points: root.points,
            weights: root.weights,
        },
    });
    let mut incumbent: Option<(f64, Vec<Pq>)> = None;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= *best {
                break;
            }
        }
        // a member is settled when its relaxed point lies in an allowed piece
        let mut branch: Option<(usize, usize)> = None;
        for (i, m) in members.iter().enumerate() {
            let x = node.lp.points[i];
            let settled = m
                .pieces
                .iter()
                .enumerate()
                .any(|(s, piece)| node.allowed[i][s] && in_convex(piece, x, member_tol));
            if settled {
                continue;
            }
            let w = &node.lp.weights[i];
            if let Some(s) = (0..w.len()).find(|&s| w[s] > INTEGRALITY_TOL && w[s] < 1.0 - INTEGRALITY_TOL) {
                branch = Some((i, s));
                break;
            }
        }
        let Some((bi, bs)) = branch else {
            if incumbent.as_ref().is_none_or(|(best, _)| node.bound < *best) {
                incumbent = Some((node.bound, node.lp.points.clone()));
            }
            continue;
        };
        // child 1: member bi restricted to piece bs; child 2: piece bs excluded
        let mut only = node.allowed.clone();
        for (s, a) in only[bi].iter_mut().enumerate() {
            *a = s == bs && *a;
        }
        let mut without = node.allowed.clone();
        without[bi][bs] = false;
        for allowed in [only, without] {
            if !allowed[bi].iter().any(|&a| a) {
                continue;
            }
            nodes += 1;
            if nodes > opts.node_limit {
                return Err(DisaggError::NodeLimit(opts.node_limit));
            }
            if let Some(lp) = solve_node(members, &allowed, demand) {
                if incumbent.as_ref().is_some_and(|(best, _)| lp.bound >= *best) {
                    continue;
                }
                seq += 1;
                heap.push(Node {
                    bound: lp.bound,
                    depth: node.depth + 1,
                    seq,
                    allowed,
                    lp: NodeLpStored {
                        points: lp.points,
                        weights: lp.weights,
                    },
                });
            }
        }
    }

    let Some((_, points)) = incumbent else {
        return Ok(DisaggregationResult::infeasible(nodes));
    };
    // simplex round-off around zero
    let eps = 1e-12 * (1.0 + demand.norm());
    let snap = |v: f64| if v.abs() < eps { 0.0 } else { v };
    let points: Vec<Pq> = points.iter().map(|x| Pq::new(snap(x.p), snap(x.q))).collect();
    let assignments: Vec<Assignment> = members
        .iter()
        .zip(&points)
        .map(|(m, &delta)| Assignment {
            id: m.id.clone(),
            delta,
            cost: cost_of_delta(delta, &m.price, d),
        })
        .collect();
    let total_cost = assignments.iter().map(|a| a.cost).sum();
    let result = DisaggregationResult {
        status: SolveStatus::Optimal,
        assignments,
        total_cost,
        nodes,
        root_bound: root_bound * d,
    };
    verify(members, demand, &result)?;
    Ok(result)
}

/// Balance within 1e-7 and per-member membership within 1e-9.
fn verify(members: &[Member], demand: Pq, r: &DisaggregationResult) -> Result<(), DisaggError> {
    let sum = r.assignments.iter().fold(Pq::ZERO, |acc, a| acc + a.delta);
    let err = (sum - demand).p.abs().max((sum - demand).q.abs());
    if err > 1e-7 {
        return Err(DisaggError::Verification(format!("balance off by {err:e}")));
    }
    for (m, a) in members.iter().zip(&r.assignments) {
        if !m.polygon.contains(a.delta) {
            return Err(DisaggError::Verification(format!(
                "assignment {} of {} outside its polygon",
                a.delta, m.id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::convex_decomposition;

    fn member(id: &str, poly: PqPolygon, cp: f64, cq: f64) -> Member {
        let pieces = convex_decomposition(&poly).unwrap().pieces;
        Member {
            id: id.into(),
            polygon: poly,
            pieces,
            price: SignedFactors::symmetric(cp, cq),
        }
    }

    #[test]
    fn single_member_vertex_demand() {
        let m = member("a", PqPolygon::rectangle(-1.0, 2.0, -1.0, 1.0).unwrap(), 10.0, 1.0);
        let r = solve_disaggregation(&[m], Pq::new(2.0, 1.0), 1.0, &MilpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.total_cost - 21.0).abs() < 1e-9);
        assert!((r.assignments[0].delta - Pq::new(2.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn cheap_unit_takes_pure_p_demand() {
        let wind = member("wind", PqPolygon::rectangle(-2.0, 2.0, -1.0, 1.0).unwrap(), 30.0, 0.1);
        let load = member("load", PqPolygon::rectangle(-2.0, 2.0, -1.0, 1.0).unwrap(), 90.0, 0.9);
        let r = solve_disaggregation(&[load, wind], Pq::new(1.5, 0.0), 1.0, &MilpOptions::default()).unwrap();
        assert!((r.total_cost - 45.0).abs() < 1e-9);
        assert!((r.assignments[1].delta.p - 1.5).abs() < 1e-9);
        assert!(r.assignments[0].delta.norm() < 1e-9);
    }

    #[test]
    fn zero_demand_is_free() {
        let m = member("a", PqPolygon::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap(), 10.0, 1.0);
        let r = solve_disaggregation(&[m], Pq::ZERO, 1.0, &MilpOptions::default()).unwrap();
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.assignments[0].delta, Pq::ZERO);
    }

    #[test]
    fn outside_demand_is_infeasible() {
        let m = member("a", PqPolygon::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap(), 10.0, 1.0);
        let r = solve_disaggregation(&[m], Pq::new(3.0, 0.0), 1.0, &MilpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn notch_forces_piece_choice() {
        // L-shaped member: its hull contains (1.5, 1.5) but the polygon does not
        let l = PqPolygon::new(vec![
            Pq::new(-1.0, -1.0),
            Pq::new(2.0, -1.0),
            Pq::new(2.0, 0.0),
            Pq::new(0.0, 0.0),
            Pq::new(0.0, 2.0),
            Pq::new(-1.0, 2.0),
        ])
        .unwrap();
        let a = member("l", l, 1.0, 1.0);
        let r = solve_disaggregation(std::slice::from_ref(&a), Pq::new(1.5, 1.5), 1.0, &MilpOptions::default())
            .unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        let b = member("sq", PqPolygon::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap(), 100.0, 100.0);
        let r = solve_disaggregation(&[a, b], Pq::new(0.5, 0.5), 1.0, &MilpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // the L-shape reaches (0.5, 0) or (0, 0.5) and the square covers the rest
        assert!((r.total_cost - (0.5 + 50.0)).abs() < 1e-9, "{}", r.total_cost);
        assert!(r.root_bound <= r.total_cost + 1e-9);
    }

    #[test]
    fn doubling_duration_doubles_cost() {
        let a = member("a", PqPolygon::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap(), 10.0, 2.0);
        let b = member("b", PqPolygon::rectangle(-2.0, 0.5, -0.5, 1.0).unwrap(), 20.0, 0.5);
        let x = Pq::new(1.2, -0.7);
        let r1 = solve_disaggregation(&[a.clone(), b.clone()], x, 1.0, &MilpOptions::default()).unwrap();
        let r2 = solve_disaggregation(&[a, b], x, 2.0, &MilpOptions::default()).unwrap();
        assert!((r2.total_cost - 2.0 * r1.total_cost).abs() < 1e-9);
    }
}
