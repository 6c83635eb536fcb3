//! Newton–Raphson AC power flow in polar coordinates.
//!
//! All quantities are per unit on the grid's `base_mva` and the nominal
//! voltage of each bus. Lines use the π equivalent; transformers a series
//! impedance behind an in-phase ratio on the HV side with the magnetizing
//! branch at the HV terminal.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::Pq;
use crate::grid::GridModel;

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 30;

/// Series impedances below this (per unit) are rejected.
const MIN_IMPEDANCE_PU: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("line {index} ({from}-{to}) has near-zero series impedance {z_pu:e} pu")]
    ZeroImpedance {
        index: usize,
        from: usize,
        to: usize,
        z_pu: f64,
    },
    #[error("tap {tap} of transformer {index} outside [{min}, {max}]")]
    TapOutOfRange {
        index: usize,
        tap: i32,
        min: i32,
        max: i32,
    },
    #[error("expected {expected} tap positions, got {got}")]
    TapCount { expected: usize, got: usize },
    #[error("expected {expected} bus injections, got {got}")]
    InjectionCount { expected: usize, got: usize },
    #[error("power flow did not converge; constraints are undefined")]
    NotConverged,
}

/// Two-port admittance of one branch, from-side first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Nodal admittance matrix (0-based bus indices) and branch stamps:
/// lines first, then transformers, in file order.
#[derive(Debug, Clone)]
pub struct Admittance {
    pub y: DMatrix<Complex64>,
    pub branches: Vec<BranchAdmittance>,
}

fn check_taps(grid: &GridModel, taps: &[i32]) -> Result<(), PowerFlowError> {
    let oltcs = grid.oltcs();
    if oltcs.len() != taps.len() {
        return Err(PowerFlowError::TapCount {
            expected: oltcs.len(),
            got: taps.len(),
        });
    }
    for (&k, &tap) in oltcs.iter().zip(taps) {
        let spec = grid.transformers[k].tap.as_ref().unwrap();
        if tap < spec.tap_min || tap > spec.tap_max {
            return Err(PowerFlowError::TapOutOfRange {
                index: k,
                tap,
                min: spec.tap_min,
                max: spec.tap_max,
            });
        }
    }
    Ok(())
}

/// Builds the nodal admittance matrix for the given OLTC positions
/// (ordered like [`GridModel::oltcs`]).
pub fn build_admittance(grid: &GridModel, taps: &[i32]) -> Result<Admittance, PowerFlowError> {
    check_taps(grid, taps)?;
    let n = grid.n_buses();
    let sb = grid.base_mva;
    let omega = 2.0 * PI * grid.frequency_hz;
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut branches = Vec::with_capacity(grid.lines.len() + grid.transformers.len());

    for (index, l) in grid.lines.iter().enumerate() {
        let vb = grid.bus(l.from).nominal_kv;
        let zb = vb * vb / sb;
        let z = Complex64::new(l.r_ohm_per_km, omega * l.l_mh_per_km * 1e-3) * l.length_km / zb;
        if z.norm() < MIN_IMPEDANCE_PU {
            return Err(PowerFlowError::ZeroImpedance {
                index,
                from: l.from,
                to: l.to,
                z_pu: z.norm(),
            });
        }
        let ys = z.inv();
        let bsh = omega * l.c_uf_per_km * 1e-6 * l.length_km * zb;
        let half = Complex64::new(0.0, bsh / 2.0);
        branches.push(BranchAdmittance {
            from: l.from - 1,
            to: l.to - 1,
            yff: ys + half,
            yft: -ys,
            ytf: -ys,
            ytt: ys + half,
        });
    }

    let mut tap_iter = taps.iter();
    for (index, t) in grid.transformers.iter().enumerate() {
        let vb_hv = grid.bus(t.hv_bus).nominal_kv;
        let vb_lv = grid.bus(t.lv_bus).nominal_kv;
        let zk = t.v_sc_pct / 100.0;
        let rk = t.p_cu_kw / 1000.0 / t.s_rated_mva;
        let xk = (zk * zk - rk * rk).sqrt();
        // rated-base impedance referred to the LV side, then to system base
        let rebase = sb / t.s_rated_mva * (t.v_lv_kv / vb_lv).powi(2);
        let z = Complex64::new(rk, xk) * rebase;
        if z.norm() < MIN_IMPEDANCE_PU {
            return Err(PowerFlowError::ZeroImpedance {
                index: grid.lines.len() + index,
                from: t.hv_bus,
                to: t.lv_bus,
                z_pu: z.norm(),
            });
        }
        let ys = z.inv();
        let fixed = (t.v_hv_kv / vb_hv) / (t.v_lv_kv / vb_lv);
        let ratio = match &t.tap {
            Some(spec) => {
                let tap = *tap_iter.next().expect("tap count checked");
                fixed * (1.0 + spec.step_pct / 100.0 * tap as f64)
            }
            None => fixed,
        };
        let g = t.p_fe_kw / 1000.0 / t.s_rated_mva;
        let ym = t.i_oc_pct / 100.0;
        let b = (ym * ym - g * g).max(0.0).sqrt();
        let mag = Complex64::new(g, -b) * (t.s_rated_mva / sb) * (vb_hv / t.v_hv_kv).powi(2);
        branches.push(BranchAdmittance {
            from: t.hv_bus - 1,
            to: t.lv_bus - 1,
            yff: ys / (ratio * ratio) + mag,
            yft: -ys / ratio,
            ytf: -ys / ratio,
            ytt: ys,
        });
    }

    for br in &branches {
        y[(br.from, br.from)] += br.yff;
        y[(br.from, br.to)] += br.yft;
        y[(br.to, br.from)] += br.ytf;
        y[(br.to, br.to)] += br.ytt;
    }
    Ok(Admittance { y, branches })
}

/// Power-flow equations with all non-slack buses of PQ type.
///
/// The state vector is `[θ of non-slack buses…, |V| of non-slack buses…]`
/// in bus order.
#[derive(Debug, Clone)]
pub struct PfProblem {
    pub y: DMatrix<Complex64>,
    pub slack: usize,
    pub v_slack: Complex64,
    /// Specified injections per bus (0-based), per unit.
    pub s_spec: Vec<Complex64>,
    pq: Vec<usize>,
}

impl PfProblem {
    pub fn new(grid: &GridModel, adm: &Admittance, injections_mw: &[Pq]) -> Result<Self, PowerFlowError> {
        let n = grid.n_buses();
        if injections_mw.len() != n {
            return Err(PowerFlowError::InjectionCount {
                expected: n,
                got: injections_mw.len(),
            });
        }
        let slack = grid.slack.bus - 1;
        let vmag = grid.slack.voltage_kv / grid.bus(grid.slack.bus).nominal_kv;
        let v_slack = Complex64::from_polar(vmag, grid.slack.angle_deg.to_radians());
        let sb = grid.base_mva;
        let s_spec = injections_mw
            .iter()
            .map(|s| Complex64::new(s.p / sb, s.q / sb))
            .collect();
        let pq = (0..n).filter(|&i| i != slack).collect();
        Ok(PfProblem {
            y: adm.y.clone(),
            slack,
            v_slack,
            s_spec,
            pq,
        })
    }

    pub fn n_state(&self) -> usize {
        2 * self.pq.len()
    }

    pub fn flat_start(&self) -> DVector<f64> {
        let m = self.pq.len();
        let mut x = DVector::zeros(2 * m);
        for k in 0..m {
            x[k] = self.v_slack.arg();
            x[m + k] = 1.0;
        }
        x
    }

    pub fn voltages(&self, x: &DVector<f64>) -> Vec<Complex64> {
        let m = self.pq.len();
        let mut v = vec![self.v_slack; self.y.nrows()];
        for (k, &i) in self.pq.iter().enumerate() {
            v[i] = Complex64::from_polar(x[m + k], x[k]);
        }
        v
    }

    fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.y[(i, k)] * v[k];
                }
                acc
            })
            .collect()
    }

    /// `[ΔP; ΔQ]` of non-slack buses, calculated minus specified.
    pub fn mismatch(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = self.voltages(x);
        let cur = self.currents(&v);
        let m = self.pq.len();
        let mut f = DVector::zeros(2 * m);
        for (k, &i) in self.pq.iter().enumerate() {
            let s = v[i] * cur[i].conj() - self.s_spec[i];
            f[k] = s.re;
            f[m + k] = s.im;
        }
        f
    }

    /// Analytic Jacobian of [`PfProblem::mismatch`].
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let v = self.voltages(x);
        let cur = self.currents(&v);
        let m = self.pq.len();
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        let j = Complex64::new(0.0, 1.0);
        for (r, &i) in self.pq.iter().enumerate() {
            for (c, &k) in self.pq.iter().enumerate() {
                let yv = self.y[(i, k)] * v[k];
                let vn_k = v[k] / v[k].norm();
                let mut d_va = -j * v[i] * yv.conj();
                let mut d_vm = v[i] * (self.y[(i, k)] * vn_k).conj();
                if i == k {
                    d_va += j * v[i] * cur[i].conj();
                    d_vm += cur[i].conj() * vn_k;
                }
                jac[(r, c)] = d_va.re;
                jac[(r, m + c)] = d_vm.re;
                jac[(m + r, c)] = d_va.im;
                jac[(m + r, m + c)] = d_vm.im;
            }
        }
        jac
    }

    /// Newton iterations from `x0`. Returns the final state, iteration count,
    /// final max-norm mismatch and whether the tolerance was reached.
    pub fn newton(&self, x0: DVector<f64>) -> (DVector<f64>, usize, f64, bool) {
        let mut x = x0;
        let mut f = self.mismatch(&x);
        let mut err = f.amax();
        let mut it = 0;
        while it < MAX_ITERATIONS {
            if err < TOLERANCE {
                return (x, it, err, true);
            }
            let jac = self.jacobian(&x);
            let Some(dx) = jac.lu().solve(&(-&f)) else {
                return (x, it, err, false);
            };
            x += dx;
            it += 1;
            f = self.mismatch(&x);
            err = f.amax();
            if !err.is_finite() {
                return (x, it, err, false);
            }
        }
        let ok = err < TOLERANCE;
        (x, it, err, ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlow {
    /// Larger of the two terminal current magnitudes, A.
    pub current_a: f64,
    /// Percent of thermal limit (lines) or of rated apparent power (transformers).
    pub loading_pct: f64,
    pub s_from_mva: Pq,
    pub s_to_mva: Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Complex bus voltages, per unit, 0-based.
    pub voltages: Vec<Complex64>,
    /// Lines first, then transformers.
    pub branches: Vec<BranchFlow>,
    /// Active losses, MW.
    pub p_loss: f64,
    pub q_loss: f64,
    /// Slack injection into the grid, MW / Mvar.
    pub slack_injection: Pq,
    /// Interconnection flow, export-positive: power delivered by this grid
    /// to the upstream network at the slack bus.
    pub ipf: Pq,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the final mismatch, per unit.
    pub max_mismatch: f64,
}

/// Solves the power flow for per-bus net injections in MW / Mvar (0-based,
/// length = number of buses; the slack entry is ignored).
pub fn solve(grid: &GridModel, injections_mw: &[Pq], taps: &[i32]) -> Result<PowerFlowSolution, PowerFlowError> {
    let adm = build_admittance(grid, taps)?;
    solve_with(grid, &adm, injections_mw)
}

/// Like [`solve`] with a prebuilt admittance matrix.
pub fn solve_with(grid: &GridModel, adm: &Admittance, injections_mw: &[Pq]) -> Result<PowerFlowSolution, PowerFlowError> {
    let prob = PfProblem::new(grid, adm, injections_mw)?;
    let (x, iterations, max_mismatch, converged) = prob.newton(prob.flat_start());
    let v = prob.voltages(&x);
    let cur = prob.currents(&v);
    let sb = grid.base_mva;
    let s_bus: Vec<Complex64> = v.iter().zip(&cur).map(|(vi, ii)| vi * ii.conj()).collect();
    let total: Complex64 = s_bus.iter().sum();
    let s_slack = s_bus[prob.slack] * sb;

    let mut branches = Vec::with_capacity(adm.branches.len());
    let n_lines = grid.lines.len();
    for (k, br) in adm.branches.iter().enumerate() {
        let vf = v[br.from];
        let vt = v[br.to];
        let i_f = br.yff * vf + br.yft * vt;
        let i_t = br.ytf * vf + br.ytt * vt;
        let sf = vf * i_f.conj() * sb;
        let st = vt * i_t.conj() * sb;
        let i_base = |bus: usize| sb / (3f64.sqrt() * grid.buses[bus].nominal_kv) * 1000.0;
        let current_a = (i_f.norm() * i_base(br.from)).max(i_t.norm() * i_base(br.to));
        let loading_pct = if k < n_lines {
            current_a / grid.lines[k].i_max_a * 100.0
        } else {
            let t = &grid.transformers[k - n_lines];
            sf.norm().max(st.norm()) / t.s_rated_mva * 100.0
        };
        branches.push(BranchFlow {
            current_a,
            loading_pct,
            s_from_mva: Pq::new(sf.re, sf.im),
            s_to_mva: Pq::new(st.re, st.im),
        });
    }

    Ok(PowerFlowSolution {
        voltages: v,
        branches,
        p_loss: total.re * sb,
        q_loss: total.im * sb,
        slack_injection: Pq::new(s_slack.re, s_slack.im),
        ipf: Pq::new(-s_slack.re, -s_slack.im),
        converged,
        iterations,
        max_mismatch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    VoltageLow,
    VoltageHigh,
    LineCurrent,
    TransformerLoading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Bus id, line index or transformer index.
    pub entity: usize,
    /// Amount beyond the limit: pu for voltages, A for lines, percentage
    /// points for transformers.
    pub magnitude: f64,
    pub limit: f64,
}

impl Violation {
    /// Violation relative to its limit, dimensionless.
    pub fn relative(&self) -> f64 {
        self.magnitude / self.limit
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn total_relative_violation(&self) -> f64 {
        self.violations.iter().map(Violation::relative).sum()
    }
}

/// Checks voltage bands, line thermal limits and transformer ratings.
pub fn check_constraints(grid: &GridModel, sol: &PowerFlowSolution) -> Result<ConstraintReport, PowerFlowError> {
    if !sol.converged {
        return Err(PowerFlowError::NotConverged);
    }
    let mut violations = Vec::new();
    for (i, b) in grid.buses.iter().enumerate() {
        let vm = sol.voltages[i].norm();
        if vm < b.v_min {
            violations.push(Violation {
                kind: ViolationKind::VoltageLow,
                entity: b.id,
                magnitude: b.v_min - vm,
                limit: b.v_min,
            });
        } else if vm > b.v_max {
            violations.push(Violation {
                kind: ViolationKind::VoltageHigh,
                entity: b.id,
                magnitude: vm - b.v_max,
                limit: b.v_max,
            });
        }
    }
    let n_lines = grid.lines.len();
    for (k, br) in sol.branches.iter().enumerate() {
        if k < n_lines {
            let limit = grid.lines[k].i_max_a;
            if br.current_a > limit {
                violations.push(Violation {
                    kind: ViolationKind::LineCurrent,
                    entity: k,
                    magnitude: br.current_a - limit,
                    limit,
                });
            }
        } else if br.loading_pct > 100.0 {
            violations.push(Violation {
                kind: ViolationKind::TransformerLoading,
                entity: k - n_lines,
                magnitude: br.loading_pct - 100.0,
                limit: 100.0,
            });
        }
    }
    Ok(ConstraintReport {
        feasible: violations.is_empty(),
        violations,
    })
}

/// Text dump of a solution: bus rows, then branch rows.
pub fn solution_csv(grid: &GridModel, sol: &PowerFlowSolution) -> String {
    let mut out = String::from("kind,id,v_pu,angle_deg,current_a,loading_pct\n");
    for (i, v) in sol.voltages.iter().enumerate() {
        let _ = writeln!(out, "bus,{},{:.10},{:.10},,", grid.buses[i].id, v.norm(), v.arg().to_degrees());
    }
    let n_lines = grid.lines.len();
    for (k, br) in sol.branches.iter().enumerate() {
        let id = if k < n_lines {
            format!("line{k}")
        } else {
            format!("trafo{}", k - n_lines)
        };
        let _ = writeln!(out, "branch,{id},,,{:.6},{:.6}", br.current_a, br.loading_pct);
    }
    out
}
