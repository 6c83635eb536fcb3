//! Distribution grid model: buses, lines, transformers and flexibility units.
//!
//! Grids are read from JSON. Bus ids are contiguous `1..=k`; power values are
//! in MW / Mvar using generator convention (positive = injection into the grid).

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pq, PqPolygon};
use crate::market::CostFactors;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid {entity}: {reason}")]
    Invalid { entity: String, reason: String },
    #[error("bus {bus} is not connected to slack bus {slack}")]
    Disconnected { bus: usize, slack: usize },
    #[error("scale factor must be positive and finite, got {0}")]
    NonPositiveScale(f64),
}

fn invalid(entity: impl Into<String>, reason: impl Into<String>) -> GridError {
    GridError::Invalid {
        entity: entity.into(),
        reason: reason.into(),
    }
}

fn default_base_mva() -> f64 {
    25.0
}
fn default_frequency() -> f64 {
    50.0
}
fn default_v_min() -> f64 {
    0.9
}
fn default_v_max() -> f64 {
    1.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slack {
    pub bus: usize,
    pub voltage_kv: f64,
    #[serde(default)]
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub nominal_kv: f64,
    /// Lower voltage limit, per unit.
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Fixed injection not attributed to any flexibility unit.
    #[serde(default)]
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub r_ohm_per_km: f64,
    pub l_mh_per_km: f64,
    pub c_uf_per_km: f64,
    pub i_max_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapChanger {
    /// Voltage change per step, percent.
    pub step_pct: f64,
    pub tap_min: i32,
    pub tap_max: i32,
    #[serde(default)]
    pub tap0: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub hv_bus: usize,
    pub lv_bus: usize,
    pub v_hv_kv: f64,
    pub v_lv_kv: f64,
    pub s_rated_mva: f64,
    /// Short-circuit voltage, percent.
    pub v_sc_pct: f64,
    /// Copper losses at rated load, kW.
    pub p_cu_kw: f64,
    /// No-load current, percent.
    #[serde(default)]
    pub i_oc_pct: f64,
    /// Iron losses, kW.
    #[serde(default)]
    pub p_fe_kw: f64,
    #[serde(default)]
    pub tap: Option<TapChanger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpuKind {
    Load,
    Pv,
    Wind,
    Dfig,
    Storage,
    Compensation,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fpu {
    pub id: String,
    pub bus: usize,
    pub kind: FpuKind,
    /// Absolute PQ capability, MW / Mvar.
    pub polygon: PqPolygon,
    pub p_op: f64,
    pub q_op: f64,
    #[serde(default)]
    pub cost: CostFactors,
}

impl Fpu {
    pub fn operating_point(&self) -> Pq {
        Pq::new(self.p_op, self.q_op)
    }

    /// Capability polygon shifted so the operating point is the origin.
    pub fn delta_polygon(&self) -> Result<PqPolygon, GeometryError> {
        self.polygon.recenter(self.p_op, self.q_op)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_frequency")]
    #[serde(rename = "frequency")]
    pub frequency_hz: f64,
    pub slack: Slack,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub transformers: Vec<Transformer>,
    #[serde(default)]
    pub fpus: Vec<Fpu>,
}

/// Reads and validates a grid file.
pub fn load_grid(path: impl AsRef<Path>) -> Result<GridModel, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GridModel::from_json_str(&text, &path.display().to_string())
}

pub fn save_grid(grid: &GridModel, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    fs::write(path, grid.to_json()).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl GridModel {
    /// Parses and validates; `origin` labels parse errors.
    pub fn from_json_str(text: &str, origin: &str) -> Result<GridModel, GridError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let grid: GridModel = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            GridError::Parse {
                path: origin.to_string(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus(&self, id: usize) -> &Bus {
        &self.buses[id - 1]
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return Err(invalid("grid", "base_mva must be positive"));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(invalid("grid", "frequency_hz must be positive"));
        }
        if self.buses.is_empty() {
            return Err(invalid("grid", "no buses"));
        }
        for (k, b) in self.buses.iter().enumerate() {
            let ent = format!("bus {}", b.id);
            if b.id != k + 1 {
                return Err(invalid(
                    ent,
                    format!("bus ids must be 1..={} in order, found {} at position {}", self.buses.len(), b.id, k + 1),
                ));
            }
            if !(b.nominal_kv > 0.0) {
                return Err(invalid(ent, "nominal_kv must be positive"));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max) {
                return Err(invalid(ent, "voltage band needs 0 < v_min < v_max"));
            }
            if !b.p_mw.is_finite() || !b.q_mvar.is_finite() {
                return Err(invalid(ent, "base injection must be finite"));
            }
        }
        let n = self.buses.len();
        let bus_ok = |id: usize| id >= 1 && id <= n;
        if !bus_ok(self.slack.bus) {
            return Err(invalid("slack", format!("unknown bus {}", self.slack.bus)));
        }
        if !(self.slack.voltage_kv > 0.0) {
            return Err(invalid("slack", "voltage_kv must be positive"));
        }
        for (k, l) in self.lines.iter().enumerate() {
            let ent = format!("line {} ({}-{})", k, l.from, l.to);
            if !bus_ok(l.from) || !bus_ok(l.to) {
                return Err(invalid(ent, "references an unknown bus"));
            }
            if l.from == l.to {
                return Err(invalid(ent, "connects a bus to itself"));
            }
            if !(l.length_km > 0.0) {
                return Err(invalid(ent, "length must be positive"));
            }
            if l.r_ohm_per_km < 0.0 || l.l_mh_per_km < 0.0 || l.c_uf_per_km < 0.0 {
                return Err(invalid(ent, "line parameters must be non-negative"));
            }
            if !(l.i_max_a > 0.0) {
                return Err(invalid(ent, "i_max_a must be positive"));
            }
            let (a, b) = (self.bus(l.from).nominal_kv, self.bus(l.to).nominal_kv);
            if (a - b).abs() > 1e-9 * a.max(b) {
                return Err(invalid(ent, "connects buses of different nominal voltage"));
            }
        }
        for (k, t) in self.transformers.iter().enumerate() {
            let ent = format!("transformer {} ({}-{})", k, t.hv_bus, t.lv_bus);
            if !bus_ok(t.hv_bus) || !bus_ok(t.lv_bus) {
                return Err(invalid(ent, "references an unknown bus"));
            }
            if t.hv_bus == t.lv_bus {
                return Err(invalid(ent, "connects a bus to itself"));
            }
            if !(t.v_hv_kv > 0.0 && t.v_lv_kv > 0.0 && t.s_rated_mva > 0.0) {
                return Err(invalid(ent, "voltages and rating must be positive"));
            }
            if !(t.v_sc_pct > 0.0 && t.v_sc_pct < 100.0) {
                return Err(invalid(ent, "v_sc_pct must be in (0, 100)"));
            }
            let z = t.v_sc_pct / 100.0;
            let r = t.p_cu_kw / 1000.0 / t.s_rated_mva;
            if t.p_cu_kw < 0.0 || r >= z {
                return Err(invalid(ent, "copper losses inconsistent with short-circuit voltage"));
            }
            if t.i_oc_pct < 0.0 || t.p_fe_kw < 0.0 {
                return Err(invalid(ent, "no-load parameters must be non-negative"));
            }
            if t.p_fe_kw / 1000.0 / t.s_rated_mva > t.i_oc_pct / 100.0 {
                return Err(invalid(ent, "iron losses exceed no-load apparent power"));
            }
            if let Some(tap) = &t.tap {
                if !(tap.step_pct > 0.0) {
                    return Err(invalid(ent, "tap step must be positive"));
                }
                if tap.tap_min > tap.tap_max || tap.tap0 < tap.tap_min || tap.tap0 > tap.tap_max {
                    return Err(invalid(ent, "tap bounds need tap_min <= tap0 <= tap_max"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.fpus {
            let ent = format!("FPU {}", f.id);
            if !seen.insert(f.id.as_str()) {
                return Err(invalid(ent, "duplicate id"));
            }
            if !bus_ok(f.bus) {
                return Err(invalid(ent, format!("unknown bus {}", f.bus)));
            }
            if !f.polygon.contains(f.operating_point()) {
                return Err(invalid(
                    ent,
                    format!("operating point ({}, {}) lies outside its polygon", f.p_op, f.q_op),
                ));
            }
            f.cost.validate().map_err(|e| invalid(format!("FPU {}", f.id), e.to_string()))?;
        }
        self.check_connected()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n + 1];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        for t in &self.transformers {
            adj[t.hv_bus].push(t.lv_bus);
            adj[t.lv_bus].push(t.hv_bus);
        }
        adj
    }

    fn check_connected(&self) -> Result<(), GridError> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.buses.len() + 1];
        let mut queue = VecDeque::from([self.slack.bus]);
        seen[self.slack.bus] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match (1..=self.buses.len()).find(|&b| !seen[b]) {
            Some(bus) => Err(GridError::Disconnected {
                bus,
                slack: self.slack.bus,
            }),
            None => Ok(()),
        }
    }

    /// Scales every FPU polygon and operating point about the origin.
    pub fn scale_installed_power(&mut self, factor: f64) -> Result<(), GridError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(GridError::NonPositiveScale(factor));
        }
        for f in &mut self.fpus {
            f.polygon = f.polygon.scale(factor);
            f.p_op *= factor;
            f.q_op *= factor;
        }
        Ok(())
    }

    /// Buses hosting at least one FPU, ascending.
    pub fn flexible_buses(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.fpus.iter().map(|f| f.bus).collect();
        b.sort_unstable();
        b.dedup();
        b
    }

    pub fn fpus_at(&self, bus: usize) -> Vec<&Fpu> {
        self.fpus.iter().filter(|f| f.bus == bus).collect()
    }

    /// Indices of transformers with an on-load tap changer.
    pub fn oltcs(&self) -> Vec<usize> {
        (0..self.transformers.len())
            .filter(|&k| self.transformers[k].tap.is_some())
            .collect()
    }

    /// Operating-point injection per bus (index 0 unused): base load plus
    /// FPU operating points.
    pub fn base_injections(&self) -> Vec<Pq> {
        let mut s = vec![Pq::ZERO; self.buses.len() + 1];
        for b in &self.buses {
            s[b.id] = Pq::new(b.p_mw, b.q_mvar);
        }
        for f in &self.fpus {
            s[f.bus] += f.operating_point();
        }
        s
    }

    /// Tap positions at the operating point, ordered like [`GridModel::oltcs`].
    pub fn base_taps(&self) -> Vec<i32> {
        self.oltcs()
            .into_iter()
            .map(|k| self.transformers[k].tap.as_ref().unwrap().tap0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "name": "two",
        "slack": {"bus": 1, "voltage_kv": 20.0},
        "buses": [{"id": 1, "nominal_kv": 20.0}, {"id": 2, "nominal_kv": 20.0, "p_mw": -1.0}],
        "lines": [{"from": 1, "to": 2, "length_km": 1.0, "r_ohm_per_km": 0.5,
                   "l_mh_per_km": 2.0, "c_uf_per_km": 0.1, "i_max_a": 500.0}],
        "fpus": [{"id": "pv", "bus": 2, "kind": "pv",
                  "polygon": [[0,-0.5],[1,-0.5],[1,0.5],[0,0.5]], "p_op": 0.5, "q_op": 0.0}]
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let g = GridModel::from_json_str(TWO_BUS, "inline").unwrap();
        assert_eq!(g.base_mva, 25.0);
        assert_eq!(g.bus(2).v_min, 0.9);
        let back = GridModel::from_json_str(&g.to_json(), "again").unwrap();
        assert_eq!(back, g);
        assert_eq!(g.flexible_buses(), vec![2]);
        assert_eq!(g.base_injections()[2], Pq::new(-0.5, 0.0));
    }

    #[test]
    fn parse_error_names_field_and_position() {
        let broken = TWO_BUS.replace("\"length_km\": 1.0", "\"length_km\": \"x\"");
        match GridModel::from_json_str(&broken, "g.json") {
            Err(GridError::Parse { path, line, field, .. }) => {
                assert_eq!(path, "g.json");
                assert_eq!(line, 5);
                assert_eq!(field, "lines[0].length_km");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn operating_point_outside_polygon_names_fpu() {
        let broken = TWO_BUS.replace("\"p_op\": 0.5", "\"p_op\": 2.5");
        let err = GridModel::from_json_str(&broken, "g").unwrap_err();
        assert!(err.to_string().contains("FPU pv"), "{err}");
    }

    #[test]
    fn orphan_bus_is_reported() {
        let broken = TWO_BUS.replace(
            r#"{"id": 2, "nominal_kv": 20.0, "p_mw": -1.0}]"#,
            r#"{"id": 2, "nominal_kv": 20.0, "p_mw": -1.0}, {"id": 3, "nominal_kv": 20.0}]"#,
        );
        match GridModel::from_json_str(&broken, "g") {
            Err(GridError::Disconnected { bus, slack }) => assert_eq!((bus, slack), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scaling_scales_polygons() {
        let mut g = GridModel::from_json_str(TWO_BUS, "inline").unwrap();
        g.scale_installed_power(0.5).unwrap();
        assert_eq!(g.fpus[0].p_op, 0.25);
        assert!((g.fpus[0].polygon.area() - 0.25).abs() < 1e-15);
        assert!(g.scale_installed_power(0.0).is_err());
    }
}
