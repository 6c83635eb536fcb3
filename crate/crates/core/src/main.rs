use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flexfor::disagg::{aggregate, DisaggError, MilpOptions, SolveStatus};
use flexfor::geometry::Pq;
use flexfor::grid::GridError;
use flexfor::market::CostMode;
use flexfor::pipeline::{base_state, prepare_grid, run, PipelineError, RunManifest};
use flexfor::pso::{plan, PsoConfig};

/// Feasible operation region sampling and monetization.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a grid, solve the operating point and check limits.
    Validate {
        grid: PathBuf,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Print evaluation counts of a sampling configuration.
    Plan {
        #[arg(long, default_value_t = 8.0)]
        delta_phi: f64,
        #[arg(long, default_value_t = 200)]
        swarm: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
    },
    /// Run the full pipeline and write all artifacts.
    Run(RunArgs),
    /// Split one bus-level demand onto the units of that bus.
    Disaggregate {
        grid: PathBuf,
        #[arg(long)]
        bus: usize,
        #[arg(long, allow_hyphen_values = true)]
        dp: f64,
        #[arg(long, allow_hyphen_values = true)]
        dq: f64,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        signed_costs: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Grid file; optional when the manifest names one.
    grid: Option<PathBuf>,
    /// JSON manifest; flags given on the command line override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    delta_phi: Option<f64>,
    #[arg(long)]
    swarm: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Cost-map scatter points per axis.
    #[arg(long)]
    scatter: Option<usize>,
    /// Premonetization scatter points per axis.
    #[arg(long)]
    premonetize_scatter: Option<usize>,
    /// Loss price, €/MWh.
    #[arg(long)]
    c_loss: Option<f64>,
    /// Provision duration, hours.
    #[arg(long)]
    duration: Option<f64>,
    /// Factor on all unit polygons and operating points.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    exact_costs: bool,
    #[arg(long)]
    signed_costs: bool,
}

impl RunArgs {
    fn manifest(self) -> Result<RunManifest, PipelineError> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        if let Some(g) = self.grid {
            m.grid = g;
        }
        if let Some(o) = self.out {
            m.output = o;
        }
        let p: &mut PsoConfig = &mut m.pso;
        if let Some(v) = self.delta_phi {
            p.delta_phi = v;
        }
        if let Some(v) = self.swarm {
            p.swarm_size = v;
        }
        if let Some(v) = self.iters {
            p.max_iterations = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.workers {
            p.workers = v;
        }
        if let Some(v) = self.scatter {
            m.costmap_resolution = v;
        }
        if let Some(v) = self.premonetize_scatter {
            m.premonetize_resolution = v;
        }
        if let Some(v) = self.c_loss {
            m.c_loss = v;
        }
        if let Some(v) = self.duration {
            m.duration = v;
        }
        if self.scale.is_some() {
            m.scale = self.scale;
        }
        m.exact_costs |= self.exact_costs;
        m.signed_costs |= self.signed_costs;
        Ok(m)
    }
}

/// Process exit codes.
mod exit {
    pub const OTHER: u8 = 1;
    pub const INVALID_INPUT: u8 = 2;
    pub const DISCONNECTED: u8 = 3;
    pub const INFEASIBLE_DEMAND: u8 = 4;
    pub const BASE_STATE: u8 = 5;
}

fn grid_code(e: &GridError) -> u8 {
    match e {
        GridError::Disconnected { .. } => exit::DISCONNECTED,
        GridError::Io { .. } => exit::OTHER,
        _ => exit::INVALID_INPUT,
    }
}

fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Grid(g) => grid_code(g),
        PipelineError::BaseState(_) => exit::BASE_STATE,
        PipelineError::Stage { stage: "config" | "manifest", .. } => exit::INVALID_INPUT,
        _ => exit::OTHER,
    }
}

fn fail(code: u8, e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn validate(grid: PathBuf, scale: Option<f64>) -> ExitCode {
    let g = match prepare_grid(&grid, scale) {
        Ok(g) => g,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    let (sol, report) = match base_state(&g) {
        Ok(r) => r,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    println!("# grid: {}", g.name);
    println!("# buses: {}", g.n_buses());
    println!("# fpus: {}", g.fpus.len());
    println!("# iterations: {}", sol.iterations);
    println!("# max_mismatch_pu: {:.3e}", sol.max_mismatch);
    println!("# base_p_vert_mw: {}", sol.ipf.p);
    println!("# base_q_vert_mvar: {}", sol.ipf.q);
    println!("# p_loss_0_mw: {}", sol.p_loss);
    if report.feasible {
        println!("feasible base state");
        ExitCode::SUCCESS
    } else {
        for v in &report.violations {
            println!(
                "violation {:?} at {}: {:.6} beyond limit {:.6}",
                v.kind, v.entity, v.magnitude, v.limit
            );
        }
        fail(exit::BASE_STATE, "infeasible base state")
    }
}

fn plan_cmd(delta_phi: f64, swarm: usize, iters: usize) -> ExitCode {
    let c = PsoConfig {
        delta_phi,
        swarm_size: swarm,
        max_iterations: iters,
        ..Default::default()
    };
    match plan(&c) {
        Ok(p) => {
            println!("# directions: {}", p.directions);
            println!("# swarm_size: {}", p.swarm_size);
            println!("# iterations: {}", p.iterations);
            println!("# evaluations: {}", p.evaluations);
            println!("# metadata_rows: {}", p.metadata_rows);
            ExitCode::SUCCESS
        }
        Err(e) => fail(exit::INVALID_INPUT, e),
    }
}

fn run_cmd(args: RunArgs) -> ExitCode {
    let m = match args.manifest() {
        Ok(m) => m,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    match run(&m) {
        Ok(out) => {
            println!("# output: {}", m.output.display());
            for (k, v) in out.summary.lines(&m) {
                println!("# {k}: {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(pipeline_code(&e), e),
    }
}

fn disaggregate_cmd(
    grid: PathBuf,
    bus: usize,
    demand: Pq,
    duration: f64,
    scale: Option<f64>,
    signed: bool,
) -> ExitCode {
    let g = match prepare_grid(&grid, scale) {
        Ok(g) => g,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    let mode = if signed { CostMode::Signed } else { CostMode::Magnitude };
    let agg = match aggregate(&g, bus, mode) {
        Ok(a) => a,
        Err(DisaggError::NoMembers) => return fail(exit::INVALID_INPUT, format!("bus {bus} has no units")),
        Err(e) => return fail(exit::OTHER, e),
    };
    let r = match agg.solve(demand, duration, &MilpOptions::default()) {
        Ok(r) => r,
        Err(e) => return fail(exit::OTHER, e),
    };
    if r.status == SolveStatus::Infeasible {
        let bb = agg.polygon.bbox();
        println!("# aggregate_dp_mw: [{}, {}]", bb.min.p, bb.max.p);
        println!("# aggregate_dq_mvar: [{}, {}]", bb.min.q, bb.max.q);
        println!("# aggregate_vertices: {}", agg.polygon.vertices().len());
        for v in agg.polygon.vertices() {
            println!("#   {} {}", v.p, v.q);
        }
        return fail(
            exit::INFEASIBLE_DEMAND,
            format!("demand {demand} lies outside the aggregate of bus {bus}"),
        );
    }
    println!("fpu,dp_mw,dq_mvar,cost_eur");
    for a in &r.assignments {
        println!("{},{},{},{}", a.id, a.delta.p, a.delta.q, a.cost);
    }
    println!("# bus: {bus}");
    println!("# total_cost_eur: {}", r.total_cost);
    println!("# nodes: {}", r.nodes);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { grid, scale } => validate(grid, scale),
        Command::Plan { delta_phi, swarm, iters } => plan_cmd(delta_phi, swarm, iters),
        Command::Run(args) => run_cmd(args),
        Command::Disaggregate {
            grid,
            bus,
            dp,
            dq,
            duration,
            scale,
            signed_costs,
        } => disaggregate_cmd(grid, bus, Pq::new(dp, dq), duration, scale, signed_costs),
    }
}
