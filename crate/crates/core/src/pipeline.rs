//! End-to-end run: aggregate, premonetize, sample, monetize, export.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{build_scatter, CostSample, CostScatter, CostmapError};
use crate::disagg::{aggregate, premonetize, AggregatedFpu, BusPricer, DisaggError, SurfaceOptions};
use crate::geometry::{Pq, PqPolygon};
use crate::grid::{load_grid, GridError, GridModel};
use crate::market::{loss_cost, CostMode, LossPriceSpec, MarketError};
use crate::powerflow::{check_constraints, solve, ConstraintReport, PowerFlowError, PowerFlowSolution};
use crate::pso::{for_polygon, sample_for_with, EdgePoint, PsoConfig, PsoError, Record, SearchSpace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("base state: {0}")]
    BaseState(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Full description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub grid: PathBuf,
    pub output: PathBuf,
    pub pso: PsoConfig,
    /// Points per axis of the premonetization scatter.
    pub premonetize_resolution: usize,
    /// Points per axis of the cost-map scatter.
    pub costmap_resolution: usize,
    /// €/MWh.
    pub c_loss: f64,
    /// Hours.
    pub duration: f64,
    /// Factor applied to every FPU polygon and operating point.
    pub scale: Option<f64>,
    /// Solve the disaggregation per particle instead of using the surface.
    pub exact_costs: bool,
    /// Use the signed cost factors where a unit defines them.
    pub signed_costs: bool,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            grid: PathBuf::new(),
            output: PathBuf::from("out"),
            pso: PsoConfig::default(),
            premonetize_resolution: 100,
            costmap_resolution: 100,
            c_loss: 50.0,
            duration: 1.0,
            scale: None,
            exact_costs: false,
            signed_costs: false,
        }
    }
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::stage("manifest", format!("{}: {e}", path.display())))
    }

    pub fn cost_mode(&self) -> CostMode {
        if self.signed_costs {
            CostMode::Signed
        } else {
            CostMode::Magnitude
        }
    }
}

/// Grid loaded for a run, with the scale applied.
pub fn prepare_grid(path: &Path, scale: Option<f64>) -> Result<GridModel, PipelineError> {
    let mut grid = load_grid(path)?;
    if let Some(s) = scale {
        grid.scale_installed_power(s)?;
        grid.validate()?;
    }
    Ok(grid)
}

/// Operating-point power flow and constraint check.
pub fn base_state(grid: &GridModel) -> Result<(PowerFlowSolution, ConstraintReport), PipelineError> {
    let inj = grid.base_injections();
    let sol = solve(grid, &inj[1..], &grid.base_taps()).map_err(|e| PipelineError::BaseState(e.to_string()))?;
    if !sol.converged {
        return Err(PipelineError::BaseState(format!(
            "power flow did not converge (mismatch {:.3e} after {} iterations)",
            sol.max_mismatch, sol.iterations
        )));
    }
    let report = check_constraints(grid, &sol).map_err(|e: PowerFlowError| PipelineError::BaseState(e.to_string()))?;
    Ok((sol, report))
}

/// Counts and timings of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub directions: usize,
    pub evaluations: usize,
    pub metadata_rows: usize,
    pub feasible_records: usize,
    pub base_ipf: Pq,
    pub p_loss_0: f64,
    pub edge_found: usize,
    pub for_vertices: usize,
    pub for_area: f64,
    pub scatter_points: usize,
    pub scatter_hit: usize,
    pub anchor_cost: f64,
    pub timings: Vec<(&'static str, f64)>,
}

impl RunSummary {
    pub fn lines(&self, m: &RunManifest) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("grid".into(), m.grid.display().to_string()),
            ("seed".into(), m.pso.seed.to_string()),
            ("delta_phi_deg".into(), m.pso.delta_phi.to_string()),
            ("swarm_size".into(), m.pso.swarm_size.to_string()),
            ("iterations".into(), m.pso.max_iterations.to_string()),
            ("directions".into(), self.directions.to_string()),
            ("evaluations".into(), self.evaluations.to_string()),
            ("metadata_rows".into(), self.metadata_rows.to_string()),
            ("feasible_records".into(), self.feasible_records.to_string()),
            ("base_p_vert_mw".into(), self.base_ipf.p.to_string()),
            ("base_q_vert_mvar".into(), self.base_ipf.q.to_string()),
            ("p_loss_0_mw".into(), self.p_loss_0.to_string()),
            ("edge_points_found".into(), self.edge_found.to_string()),
            ("for_vertices".into(), self.for_vertices.to_string()),
            ("for_area".into(), self.for_area.to_string()),
            ("scatter_points".into(), self.scatter_points.to_string()),
            ("scatter_points_hit".into(), self.scatter_hit.to_string()),
            ("anchor_cost_eur".into(), self.anchor_cost.to_string()),
        ];
        for (k, t) in &self.timings {
            v.push((format!("time_{k}_s"), format!("{t:.3}")));
        }
        v
    }
}

fn pricer_for(agg: AggregatedFpu, m: &RunManifest, out: &Path) -> Result<BusPricer, PipelineError> {
    if agg.is_single() {
        return Ok(BusPricer::Single {
            price: agg.members[0].price,
        });
    }
    if m.exact_costs {
        return Ok(BusPricer::Exact(Box::new(agg)));
    }
    let opts = SurfaceOptions {
        resolution: m.premonetize_resolution,
        duration: m.duration,
        ..Default::default()
    };
    let s = premonetize(&agg, &opts).map_err(|e| PipelineError::stage("premonetize", e))?;
    let base = out.join(format!("surface_bus{}", agg.bus));
    let p = base.with_extension("csv");
    fs::write(&p, s.to_csv()).map_err(io_err(&p))?;
    let p = out.join(format!("surface_bus{}_triangles.csv", agg.bus));
    fs::write(&p, s.triangles_csv()).map_err(io_err(&p))?;
    Ok(BusPricer::Surface(Box::new(s)))
}

/// Service cost of a bus deviation; boundary points the exact solver
/// rejects by rounding are retried slightly towards the origin.
fn bus_cost(pricer: &BusPricer, delta: Pq, d: f64) -> Result<f64, DisaggError> {
    match pricer.cost(delta, d) {
        Err(DisaggError::Infeasible { .. }) if matches!(pricer, BusPricer::Exact(_)) => {
            let mut last = None;
            for shrink in [1e-9, 1e-7, 1e-5] {
                match pricer.cost(delta * (1.0 - shrink), d) {
                    Ok(c) => return Ok(c),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap())
        }
        r => r,
    }
}

fn record_cost(rec: &Record, pricers: &[BusPricer], loss: &LossPriceSpec, d: f64) -> Result<f64, DisaggError> {
    let mut c = 0.0;
    for (p, delta) in pricers.iter().zip(&rec.deltas) {
        c += bus_cost(p, *delta, d)?;
    }
    Ok(c + loss_cost(rec.p_loss, loss))
}

fn metadata_header(grid: &GridModel, space: &SearchSpace) -> String {
    let mut h = String::from("direction,iteration,p_vert_mw,q_vert_mvar,p_loss_mw,converged,feasible,cost_eur");
    for b in &space.buses {
        let _ = write!(h, ",dp_bus{}_mw", b.bus);
    }
    for b in &space.buses {
        let _ = write!(h, ",dq_bus{}_mvar", b.bus);
    }
    for t in &space.taps {
        let tr = &grid.transformers[t.transformer];
        let _ = write!(h, ",tap_{}_{}", tr.hv_bus, tr.lv_bus);
    }
    h.push('\n');
    h
}

fn metadata_row(out: &mut String, r: &Record, cost: Option<f64>) {
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},",
        r.direction, r.iteration, r.ipf.p, r.ipf.q, r.p_loss, r.converged as u8, r.feasible as u8
    );
    if let Some(c) = cost {
        let _ = write!(out, "{c}");
    }
    for d in &r.deltas {
        let _ = write!(out, ",{}", d.p);
    }
    for d in &r.deltas {
        let _ = write!(out, ",{}", d.q);
    }
    for t in &r.taps {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
}

fn edge_csv(edge: &[EdgePoint]) -> String {
    let mut s = String::from("theta_deg,p_vert_mw,q_vert_mvar,found\n");
    for e in edge {
        let _ = writeln!(s, "{},{},{},{}", e.direction.theta_deg, e.ipf.p, e.ipf.q, e.found as u8);
    }
    s
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub edge: Vec<EdgePoint>,
    pub for_polygon: PqPolygon,
    pub costmap: CostScatter,
    pub base: Record,
}

/// Executes a manifest and writes all artifacts into `m.output`.
pub fn run(m: &RunManifest) -> Result<RunOutput, PipelineError> {
    m.pso.validate().map_err(|e| PipelineError::stage("config", e))?;
    LossPriceSpec::new(m.c_loss, 0.0, m.duration).map_err(|e: MarketError| PipelineError::stage("config", e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(m.pso.workers)
        .build()
        .map_err(|e| PipelineError::stage("threads", e))?;
    pool.install(|| run_inner(m))
}

fn run_inner(m: &RunManifest) -> Result<RunOutput, PipelineError> {
    let t0 = Instant::now();
    let mut timings = Vec::new();
    let grid = prepare_grid(&m.grid, m.scale)?;
    let (_, report) = base_state(&grid)?;
    if !report.feasible {
        return Err(PipelineError::BaseState(format!(
            "{} constraint violation(s) at the operating point",
            report.violations.len()
        )));
    }
    fs::create_dir_all(&m.output).map_err(io_err(&m.output))?;

    let mut pricers = Vec::new();
    let mut polygons = Vec::new();
    for bus in grid.flexible_buses() {
        let agg = aggregate(&grid, bus, m.cost_mode()).map_err(|e| PipelineError::stage("aggregate", e))?;
        polygons.push((bus, agg.polygon.clone()));
        pricers.push(pricer_for(agg, m, &m.output)?);
    }
    timings.push(("aggregate", t0.elapsed().as_secs_f64()));

    let t1 = Instant::now();
    let space = SearchSpace::new(&grid, polygons).map_err(|e| PipelineError::stage("search space", e))?;
    let meta_path = m.output.join("metadata.csv");
    let mut meta = BufWriter::new(File::create(&meta_path).map_err(io_err(&meta_path))?);
    meta.write_all(metadata_header(&grid, &space).as_bytes())
        .map_err(io_err(&meta_path))?;

    let mut loss: Option<LossPriceSpec> = None;
    let mut samples: Vec<CostSample> = Vec::new();
    let mut rows = 0usize;
    let mut failure: Option<PipelineError> = None;
    let summary = sample_for_with(&grid, &space, &m.pso, |records| {
        if failure.is_some() {
            return;
        }
        // losses of the operating-point record are the reference
        let spec = *loss.get_or_insert_with(|| {
            LossPriceSpec::new(m.c_loss, records[0].p_loss, m.duration).expect("checked in run")
        });
        let costs: Result<Vec<Option<f64>>, DisaggError> = records
            .par_iter()
            .map(|r| {
                if r.feasible {
                    record_cost(r, &pricers, &spec, m.duration).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect();
        let costs = match costs {
            Ok(c) => c,
            Err(e) => {
                failure = Some(PipelineError::stage("monetize", e));
                return;
            }
        };
        let mut buf = String::with_capacity(records.len() * 128);
        for (r, c) in records.iter().zip(&costs) {
            metadata_row(&mut buf, r, *c);
            if let Some(c) = c {
                samples.push(CostSample { ipf: r.ipf, cost: *c });
            }
        }
        rows += records.len();
        if let Err(e) = meta.write_all(buf.as_bytes()) {
            failure = Some(PipelineError::Io {
                path: meta_path.clone(),
                source: e,
            });
        }
    })
    .map_err(|e: PsoError| PipelineError::stage("sample", e))?;
    if let Some(e) = failure {
        return Err(e);
    }
    meta.flush().map_err(io_err(&meta_path))?;
    drop(meta);
    timings.push(("sample", t1.elapsed().as_secs_f64()));

    let t2 = Instant::now();
    let p = m.output.join("for_edge.csv");
    fs::write(&p, edge_csv(&summary.edge)).map_err(io_err(&p))?;
    let polygon = for_polygon(&summary.edge).map_err(|e| PipelineError::stage("region polygon", e))?;
    let mut scatter = build_scatter(&polygon, m.costmap_resolution).map_err(|e: CostmapError| PipelineError::stage("costmap", e))?;
    scatter.assign(&samples).map_err(|e| PipelineError::stage("costmap", e))?;
    let p = m.output.join("costmap.csv");
    scatter.write(&p).map_err(|e| PipelineError::stage("costmap", e))?;
    let anchor = crate::costmap::nearest_brute(&scatter.points, summary.base.ipf);
    timings.push(("costmap", t2.elapsed().as_secs_f64()));
    timings.push(("total", t0.elapsed().as_secs_f64()));

    let run_summary = RunSummary {
        directions: summary.edge.len(),
        evaluations: summary.evaluations,
        metadata_rows: rows,
        feasible_records: samples.len(),
        base_ipf: summary.base.ipf,
        p_loss_0: summary.base.p_loss,
        edge_found: summary.edge.iter().filter(|e| e.found).count(),
        for_vertices: polygon.len(),
        for_area: polygon.area(),
        scatter_points: scatter.len(),
        scatter_hit: scatter.hits.iter().filter(|&&h| h > 0).count(),
        anchor_cost: scatter.costs[anchor],
        timings,
    };
    let mut text = String::new();
    for (k, v) in run_summary.lines(m) {
        let _ = writeln!(text, "{k}: {v}");
    }
    let p = m.output.join("run_summary.txt");
    fs::write(&p, text).map_err(io_err(&p))?;

    Ok(RunOutput {
        summary: run_summary,
        edge: summary.edge,
        for_polygon: polygon,
        costmap: scatter,
        base: summary.base,
    })
}
