//! Angle-swept particle swarm sampling of the feasible operation region.
//!
//! For every sampling direction an independent swarm minimizes a linear
//! objective of the interconnection flow. Each particle holds one deviation
//! per flexible bus (inside that bus's aggregated polygon) plus one
//! continuous coordinate per tap changer. Every power flow evaluated along
//! the way is kept as metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{triangulate, GeometryError, Pq, PqPolygon, Triangulation};
use crate::grid::GridModel;
use crate::powerflow::{build_admittance, check_constraints, solve_with, Admittance, PowerFlowError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsoError {
    #[error("delta_phi must divide 360 evenly, got {0}")]
    DeltaPhi(f64),
    #[error("swarm size must be at least 1")]
    SwarmSize,
    #[error("iteration count must be at least 1")]
    Iterations,
    #[error("invalid coefficient: {0}")]
    Coefficient(&'static str),
    #[error("bus {0} has no flexibility polygon")]
    EmptyBus(usize),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("power flow: {0}")]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    /// Angular step between sampling directions, degrees.
    pub delta_phi: f64,
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub w_start: f64,
    pub w_end: f64,
    pub c1: f64,
    pub c2: f64,
    /// Velocity limit as a fraction of the coordinate's range.
    pub velocity_clamp: f64,
    /// Added to the objective of infeasible particles; derived from the
    /// problem size when `None`.
    pub penalty_scale: Option<f64>,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            delta_phi: 8.0,
            swarm_size: 200,
            max_iterations: 200,
            w_start: 0.9,
            w_end: 0.4,
            c1: 2.0,
            c2: 2.0,
            velocity_clamp: 0.5,
            penalty_scale: None,
            seed: 0,
            workers: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        let l = 360.0 / self.delta_phi;
        if !(self.delta_phi > 0.0) || (l - l.round()).abs() > 1e-9 || l.round() < 1.0 {
            return Err(PsoError::DeltaPhi(self.delta_phi));
        }
        if self.swarm_size == 0 {
            return Err(PsoError::SwarmSize);
        }
        if self.max_iterations == 0 {
            return Err(PsoError::Iterations);
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(PsoError::Coefficient("c1/c2"));
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(PsoError::Coefficient("velocity_clamp"));
        }
        if matches!(self.penalty_scale, Some(p) if !(p > 0.0)) {
            return Err(PsoError::Coefficient("penalty_scale"));
        }
        Ok(())
    }

    pub fn n_directions(&self) -> usize {
        (360.0 / self.delta_phi).round() as usize
    }

    fn inertia(&self, t: usize) -> f64 {
        if self.max_iterations <= 1 {
            return self.w_start;
        }
        let a = t as f64 / (self.max_iterations - 1) as f64;
        self.w_start + (self.w_end - self.w_start) * a
    }
}

/// Evaluation counts of a configuration, without solving anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluationPlan {
    pub directions: usize,
    pub swarm_size: usize,
    pub iterations: usize,
    /// Power flows of the swarms: directions × swarm × iterations.
    pub evaluations: usize,
    /// Metadata rows including the operating-point record.
    pub metadata_rows: usize,
}

pub fn plan(config: &PsoConfig) -> Result<EvaluationPlan, PsoError> {
    config.validate()?;
    let l = config.n_directions();
    let evaluations = l * config.swarm_size * config.max_iterations;
    Ok(EvaluationPlan {
        directions: l,
        swarm_size: config.swarm_size,
        iterations: config.max_iterations,
        evaluations,
        metadata_rows: evaluations + 1,
    })
}

/// One objective of the sweep: minimize `sign_p·P + sign_q·tan(phi)·Q`,
/// or `sign_q·Q` for the two vertical directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDirection {
    pub index: usize,
    /// Direction of the sought extreme point, degrees from the +P axis.
    pub theta_deg: f64,
    /// Angle to the P axis, degrees in [0, 90].
    pub phi_deg: f64,
    pub sign_p: f64,
    pub sign_q: f64,
    pub pure_q: bool,
}

/// Directions `θ_i = i·Δφ`, `i = 0..l`.
///
/// The objective for θ pushes the flow towards `(cos θ, sin θ)`; `phi` is the
/// angle of that ray to the P axis so that `tan(phi) = |tan θ|`.
pub fn directions(delta_phi: f64) -> Vec<SamplingDirection> {
    let l = (360.0 / delta_phi).round() as usize;
    (0..l)
        .map(|i| {
            let theta = i as f64 * delta_phi;
            let (s, c) = theta.to_radians().sin_cos();
            let pure_q = (theta - 90.0).abs() < 1e-9 || (theta - 270.0).abs() < 1e-9;
            let sign = |v: f64| {
                if v.abs() < 1e-12 {
                    0.0
                } else {
                    -v.signum()
                }
            };
            let phi = if pure_q {
                90.0
            } else {
                let r = theta % 180.0;
                if r <= 90.0 {
                    r
                } else {
                    180.0 - r
                }
            };
            SamplingDirection {
                index: i,
                theta_deg: theta,
                phi_deg: phi,
                sign_p: if pure_q { 0.0 } else { -c.signum() },
                sign_q: sign(s),
                pure_q,
            }
        })
        .collect()
}

pub fn objective(ipf: Pq, dir: &SamplingDirection) -> f64 {
    if dir.pure_q {
        dir.sign_q * ipf.q
    } else {
        dir.sign_p * ipf.p + dir.sign_q * dir.phi_deg.to_radians().tan() * ipf.q
    }
}

/// Deviation region of one flexible bus.
#[derive(Debug, Clone)]
pub struct BusSpace {
    pub bus: usize,
    pub polygon: PqPolygon,
    pub tri: Triangulation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSpace {
    pub transformer: usize,
    pub min: i32,
    pub max: i32,
    pub base: i32,
}

/// Coordinates of a particle: `[dp per bus…, dq per bus…, tap per OLTC…]`.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub buses: Vec<BusSpace>,
    pub taps: Vec<TapSpace>,
}

impl SearchSpace {
    pub fn new(grid: &GridModel, bus_polygons: Vec<(usize, PqPolygon)>) -> Result<Self, PsoError> {
        let buses = bus_polygons
            .into_iter()
            .map(|(bus, polygon)| {
                let tri = triangulate(&polygon)?;
                Ok(BusSpace { bus, polygon, tri })
            })
            .collect::<Result<Vec<_>, PsoError>>()?;
        let taps = grid
            .oltcs()
            .into_iter()
            .map(|k| {
                let t = grid.transformers[k].tap.as_ref().unwrap();
                TapSpace {
                    transformer: k,
                    min: t.tap_min,
                    max: t.tap_max,
                    base: t.tap0,
                }
            })
            .collect();
        Ok(SearchSpace { buses, taps })
    }

    pub fn dim(&self) -> usize {
        2 * self.buses.len() + self.taps.len()
    }

    fn ranges(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.dim());
        for b in &self.buses {
            r.push(b.polygon.bbox().width());
        }
        for b in &self.buses {
            r.push(b.polygon.bbox().height());
        }
        for t in &self.taps {
            r.push((t.max - t.min) as f64);
        }
        r
    }

    pub fn base_position(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        let nb = self.buses.len();
        for (k, t) in self.taps.iter().enumerate() {
            x[2 * nb + k] = t.base as f64;
        }
        x
    }

    /// Bus deviation `k` of a position vector.
    pub fn bus_delta(&self, x: &[f64], k: usize) -> Pq {
        Pq::new(x[k], x[self.buses.len() + k])
    }

    pub fn taps_of(&self, x: &[f64]) -> Vec<i32> {
        let nb = self.buses.len();
        self.taps
            .iter()
            .enumerate()
            .map(|(k, t)| (x[2 * nb + k].round() as i32).clamp(t.min, t.max))
            .collect()
    }
}

/// Everything recorded about one evaluated particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Direction index, `-1` for the operating-point record.
    pub direction: i64,
    pub iteration: usize,
    pub ipf: Pq,
    pub p_loss: f64,
    pub converged: bool,
    pub feasible: bool,
    /// Penalized objective used by the swarm.
    pub fitness: f64,
    /// Bus deviations (`dp…, dq…`) followed by the rounded taps.
    pub deltas: Vec<Pq>,
    pub taps: Vec<i32>,
}

/// Evaluates particles against the grid.
pub struct Evaluator<'a> {
    grid: &'a GridModel,
    space: &'a SearchSpace,
    base: Vec<Pq>,
    admittances: Vec<Option<Admittance>>,
    penalty: f64,
}

const UNCONVERGED_FACTOR: f64 = 1e3;

impl<'a> Evaluator<'a> {
    pub fn new(grid: &'a GridModel, space: &'a SearchSpace, penalty_scale: Option<f64>) -> Result<Self, PsoError> {
        let inj = grid.base_injections();
        let base: Vec<Pq> = inj[1..].to_vec();
        // one admittance per tap combination when there are few
        let combos: usize = space.taps.iter().map(|t| (t.max - t.min + 1) as usize).product();
        let admittances = if combos <= 4096 {
            (0..combos)
                .map(|mut c| {
                    let taps: Vec<i32> = space
                        .taps
                        .iter()
                        .map(|t| {
                            let w = (t.max - t.min + 1) as usize;
                            let v = t.min + (c % w) as i32;
                            c /= w;
                            v
                        })
                        .collect();
                    build_admittance(grid, &taps).map(Some)
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        let scale = space
            .buses
            .iter()
            .map(|b| b.polygon.bbox().span())
            .sum::<f64>()
            .max(1.0);
        let penalty = penalty_scale.unwrap_or(1e6 * scale);
        Ok(Evaluator {
            grid,
            space,
            base,
            admittances,
            penalty,
        })
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    fn admittance_index(&self, taps: &[i32]) -> usize {
        let mut idx = 0;
        let mut mul = 1;
        for (t, &v) in self.space.taps.iter().zip(taps) {
            idx += (v - t.min) as usize * mul;
            mul *= (t.max - t.min + 1) as usize;
        }
        idx
    }

    /// Solves the power flow of position `x` and scores it for `dir`
    /// (`None` for the unscored operating-point record).
    pub fn evaluate(&self, x: &[f64], dir: Option<&SamplingDirection>, direction: i64, iteration: usize) -> Record {
        let nb = self.space.buses.len();
        let deltas: Vec<Pq> = (0..nb).map(|k| self.space.bus_delta(x, k)).collect();
        let taps = self.space.taps_of(x);
        let mut inj = self.base.clone();
        for (b, d) in self.space.buses.iter().zip(&deltas) {
            inj[b.bus - 1] += *d;
        }
        let built;
        let adm = if self.admittances.is_empty() {
            built = build_admittance(self.grid, &taps).expect("taps clamped to range");
            &built
        } else {
            self.admittances[self.admittance_index(&taps)].as_ref().unwrap()
        };
        let sol = solve_with(self.grid, adm, &inj).expect("injection vector sized to grid");
        let (feasible, violation) = if sol.converged {
            let rep = check_constraints(self.grid, &sol).expect("converged");
            (rep.feasible, rep.total_relative_violation())
        } else {
            (false, 0.0)
        };
        let obj = dir.map(|d| objective(sol.ipf, d)).unwrap_or(0.0);
        let fitness = if !sol.converged {
            self.penalty * (1.0 + UNCONVERGED_FACTOR)
        } else if feasible {
            obj
        } else {
            obj + self.penalty * (1.0 + violation)
        };
        Record {
            direction,
            iteration,
            ipf: sol.ipf,
            p_loss: sol.p_loss,
            converged: sol.converged,
            feasible,
            fitness,
            deltas,
            taps,
        }
    }
}

/// Result of one direction's swarm.
#[derive(Debug, Clone)]
pub struct DirectionOutcome {
    pub direction: SamplingDirection,
    /// `swarm_size × max_iterations` records, iteration-major.
    pub records: Vec<Record>,
    /// Best feasible record, if any particle was feasible.
    pub extreme: Option<Record>,
    /// Global-best fitness after each iteration.
    pub best_history: Vec<f64>,
}

struct Swarm {
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    best_x: Vec<Vec<f64>>,
    best_f: Vec<f64>,
    g: usize,
}

/// Runs the swarm for one direction.
pub fn run_direction(
    eval: &Evaluator<'_>,
    dir: &SamplingDirection,
    config: &PsoConfig,
) -> DirectionOutcome {
    let space = eval.space;
    let n = config.swarm_size;
    let dim = space.dim();
    let nb = space.buses.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(dir.index as u64);
    let vmax: Vec<f64> = space.ranges().iter().map(|r| r * config.velocity_clamp).collect();

    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0.0; dim];
        for (k, b) in space.buses.iter().enumerate() {
            let p = b.tri.sample_uniform(&mut rng);
            x[k] = p.p;
            x[nb + k] = p.q;
        }
        for (k, t) in space.taps.iter().enumerate() {
            x[2 * nb + k] = rng.random_range(t.min..=t.max) as f64;
        }
        x0.push(x);
    }

    let mut records = Vec::with_capacity(n * config.max_iterations);
    let evaluate_all = |xs: &[Vec<f64>], t: usize| -> Vec<Record> {
        xs.par_iter()
            .map(|x| eval.evaluate(x, Some(dir), dir.index as i64, t))
            .collect()
    };

    let first = evaluate_all(&x0, 0);
    let mut swarm = Swarm {
        v: vec![vec![0.0; dim]; n],
        best_x: x0.clone(),
        best_f: first.iter().map(|r| r.fitness).collect(),
        x: x0,
        g: 0,
    };
    let mut extreme: Option<Record> = None;
    let consider = |r: &Record, extreme: &mut Option<Record>| {
        if r.feasible && extreme.as_ref().is_none_or(|e| r.fitness < e.fitness) {
            *extreme = Some(r.clone());
        }
    };
    for i in 0..n {
        if swarm.best_f[i] < swarm.best_f[swarm.g] {
            swarm.g = i;
        }
        consider(&first[i], &mut extreme);
    }
    records.extend(first);
    let mut best_history = vec![swarm.best_f[swarm.g]];

    for t in 1..config.max_iterations {
        let w = config.inertia(t);
        let g = swarm.best_x[swarm.g].clone();
        for i in 0..n {
            let x = &mut swarm.x[i];
            let v = &mut swarm.v[i];
            let pb = &swarm.best_x[i];
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut vd = w * v[d] + config.c1 * r1 * (pb[d] - x[d]) + config.c2 * r2 * (g[d] - x[d]);
                vd = vd.clamp(-vmax[d], vmax[d]);
                v[d] = vd;
                x[d] += vd;
            }
            for (k, b) in space.buses.iter().enumerate() {
                let p = Pq::new(x[k], x[nb + k]);
                if !b.polygon.contains(p) {
                    let y = b.polygon.project(p);
                    x[k] = y.p;
                    x[nb + k] = y.q;
                    v[k] = -v[k];
                    v[nb + k] = -v[nb + k];
                }
            }
            for (k, tap) in space.taps.iter().enumerate() {
                let d = 2 * nb + k;
                let (lo, hi) = (tap.min as f64, tap.max as f64);
                if x[d] < lo || x[d] > hi {
                    x[d] = x[d].clamp(lo, hi);
                    v[d] = -v[d];
                }
            }
        }
        let evals = evaluate_all(&swarm.x, t);
        for i in 0..n {
            let f = evals[i].fitness;
            if f < swarm.best_f[i] {
                swarm.best_f[i] = f;
                swarm.best_x[i] = swarm.x[i].clone();
            }
            consider(&evals[i], &mut extreme);
        }
        for i in 0..n {
            if swarm.best_f[i] < swarm.best_f[swarm.g] {
                swarm.g = i;
            }
        }
        records.extend(evals);
        best_history.push(swarm.best_f[swarm.g]);
    }

    DirectionOutcome {
        direction: *dir,
        records,
        extreme,
        best_history,
    }
}

/// Extreme point of one direction on the region edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePoint {
    pub direction: SamplingDirection,
    pub ipf: Pq,
    /// False when no feasible particle was found; `ipf` is then the
    /// operating-point flow.
    pub found: bool,
    pub record: Option<Record>,
}

#[derive(Debug, Clone)]
pub struct ForSummary {
    pub edge: Vec<EdgePoint>,
    pub base: Record,
    pub evaluations: usize,
}

/// Samples all directions, handing the operating-point record and then each
/// direction's records to `sink` in direction order. Directions run concurrently in batches so that at most
/// one batch of metadata is held in memory.
pub fn sample_for_with<F>(
    grid: &GridModel,
    space: &SearchSpace,
    config: &PsoConfig,
    mut sink: F,
) -> Result<ForSummary, PsoError>
where
    F: FnMut(&[Record]),
{
    config.validate()?;
    let eval = Evaluator::new(grid, space, config.penalty_scale)?;
    let base = eval.evaluate(&space.base_position(), None, -1, 0);
    sink(std::slice::from_ref(&base));
    let dirs = directions(config.delta_phi);
    let batch = rayon::current_num_threads().max(1);
    let mut edge = Vec::with_capacity(dirs.len());
    let mut evaluations = 0;
    for chunk in dirs.chunks(batch) {
        let outcomes: Vec<DirectionOutcome> = chunk
            .par_iter()
            .map(|d| run_direction(&eval, d, config))
            .collect();
        for o in outcomes {
            evaluations += o.records.len();
            sink(&o.records);
            edge.push(match &o.extreme {
                Some(r) => EdgePoint {
                    direction: o.direction,
                    ipf: r.ipf,
                    found: true,
                    record: Some(r.clone()),
                },
                None => {
                    log::warn!("direction {} found no feasible particle", o.direction.theta_deg);
                    EdgePoint {
                        direction: o.direction,
                        ipf: base.ipf,
                        found: false,
                        record: None,
                    }
                }
            });
        }
    }
    Ok(ForSummary {
        edge,
        base,
        evaluations,
    })
}

/// Collected result: edge points and every record, operating point first.
#[derive(Debug, Clone)]
pub struct ForResult {
    pub edge: Vec<EdgePoint>,
    pub metadata: Vec<Record>,
}

pub fn sample_for(grid: &GridModel, space: &SearchSpace, config: &PsoConfig) -> Result<ForResult, PsoError> {
    let mut metadata = Vec::new();
    let summary = sample_for_with(grid, space, config, |rs| metadata.extend_from_slice(rs))?;
    Ok(ForResult {
        edge: summary.edge,
        metadata,
    })
}

/// Polygon through the edge points in direction order.
///
/// Duplicate consecutive points are merged. If the ring is not a simple
/// polygon (sampling noise can fold it), its convex hull is used instead.
pub fn for_polygon(edge: &[EdgePoint]) -> Result<PqPolygon, GeometryError> {
    let mut pts: Vec<Pq> = Vec::with_capacity(edge.len());
    let span = crate::geometry::BoundingBox::of(&edge.iter().map(|e| e.ipf).collect::<Vec<_>>())
        .map(|b| b.span())
        .unwrap_or(0.0);
    let tol = 1e-9 * span.max(1e-12);
    for e in edge {
        if pts.last().is_none_or(|l: &Pq| l.distance(e.ipf) > tol) {
            pts.push(e.ipf);
        }
    }
    while pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= tol {
        pts.pop();
    }
    match PqPolygon::new(pts.clone()) {
        Ok(p) => Ok(p),
        Err(_) => {
            log::warn!("edge points do not form a simple polygon; using their convex hull");
            convex_hull(&pts)
        }
    }
}

/// Andrew's monotone chain.
pub fn convex_hull(points: &[Pq]) -> Result<PqPolygon, GeometryError> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.p.total_cmp(&b.p).then(a.q.total_cmp(&b.q)));
    p.dedup();
    if p.len() < 3 {
        return Err(GeometryError::TooFewVertices(p.len()));
    }
    let mut hull: Vec<Pq> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pq>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &x in iter {
            while hull.len() >= start + 2
                && crate::geometry::orient(hull[hull.len() - 2], hull[hull.len() - 1], x) <= 0.0
            {
                hull.pop();
            }
            hull.push(x);
        }
        hull.pop();
    }
    PqPolygon::new(hull)
}
