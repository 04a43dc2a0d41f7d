//! Per-unit radial feeder model, steady-state initialization and the
//! quasi-static network solve used inside every dynamic step.

mod powerflow;
mod solve;

pub use powerflow::{init_power_flow, PowerFlow, SWEEP_TOLERANCE, SWEEP_ITERATION_CAP};
pub use solve::{solve_network, NetworkSolution, NetworkSolver};

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled synthetic feeder, identical to `feeders/reference_7bus.json`.
pub const DEFAULT_FEEDER_JSON: &str = include_str!("../../feeders/reference_7bus.json");

/// Power-balance residual every solution must meet (pu).
pub const BALANCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBase {
    s_base: f64,
    v_base: f64,
}

impl PerUnitBase {
    /// `s_base` in VA, `v_base` line-to-line in V.
    pub fn new(s_base: f64, v_base: f64) -> Result<Self> {
        if !(s_base.is_finite() && s_base > 0.0) || !(v_base.is_finite() && v_base > 0.0) {
            return Err(Error::Invalid(format!(
                "per-unit bases must be positive (s_base={s_base}, v_base={v_base})"
            )));
        }
        Ok(Self { s_base, v_base })
    }

    pub fn s_base(&self) -> f64 {
        self.s_base
    }

    pub fn v_base(&self) -> f64 {
        self.v_base
    }

    pub fn z_base(&self) -> f64 {
        self.v_base * self.v_base / self.s_base
    }

    pub fn i_base(&self) -> f64 {
        self.s_base / (3f64.sqrt() * self.v_base)
    }
}

/// A line section between two buses, parameters in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Ω/km
    pub r_per_km: f64,
    /// Ω/km
    pub x_per_km: f64,
    pub length_km: f64,
}

impl Branch {
    pub fn impedance_ohm(&self) -> Complex64 {
        Complex64::new(self.r_per_km, self.x_per_km) * self.length_km
    }

    pub fn impedance_pu(&self, base: &PerUnitBase) -> Complex64 {
        self.impedance_ohm() / base.z_base()
    }
}

/// Lagging constant-power load at a bus.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub bus: usize,
    /// Active power, pu on the system base.
    pub p_nominal: f64,
    pub power_factor: f64,
}

impl LoadSpec {
    pub fn q_nominal(&self) -> f64 {
        self.p_nominal * self.power_factor.acos().tan()
    }

    /// Complex power drawn at nominal voltage.
    pub fn s_nominal(&self) -> Complex64 {
        Complex64::new(self.p_nominal, self.q_nominal())
    }
}

/// Where RoCoF is recorded along the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementPoint {
    Start,
    Middle,
    End,
}

impl MeasurementPoint {
    pub const ALL: [MeasurementPoint; 3] = [Self::Start, Self::Middle, Self::End];

    pub fn label(self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::Middle => "middle",
            Self::End => "end",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MeasurementPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bus indices of the start, middle and end measurement points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementBuses {
    pub start: usize,
    pub middle: usize,
    pub end: usize,
}

impl MeasurementBuses {
    pub fn get(&self, point: MeasurementPoint) -> usize {
        match point {
            MeasurementPoint::Start => self.start,
            MeasurementPoint::Middle => self.middle,
            MeasurementPoint::End => self.end,
        }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.start, self.middle, self.end]
    }
}

/// Feeder description file as stored on disk (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bases: BasesDescription,
    pub buses: Vec<String>,
    pub branches: Vec<BranchDescription>,
    #[serde(default)]
    pub loads: Vec<LoadDescription>,
    pub pv_bus: String,
    /// `[r, x]` in pu on the system base.
    pub source_impedance_pu: [f64; 2],
    #[serde(default = "default_emf")]
    pub source_emf_pu: f64,
}

fn default_emf() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesDescription {
    pub s_base_va: f64,
    pub v_base_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDescription {
    pub from_bus: String,
    pub to_bus: String,
    pub r_per_km: f64,
    pub x_per_km: f64,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDescription {
    pub bus: String,
    pub p_mw: f64,
    pub pf: f64,
}

impl FeederDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_FEEDER_JSON).expect("bundled feeder parses")
    }
}

/// Validated radial feeder in per-unit. Bus 0 is the source bus.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub name: Option<String>,
    pub base: PerUnitBase,
    pub buses: Vec<String>,
    pub branches: Vec<Branch>,
    pub loads: Vec<LoadSpec>,
    pub pv_bus: usize,
    pub source_impedance: Complex64,
    /// Magnitude of the source EMF at nominal conditions (pu).
    pub source_emf: f64,
    pub measurement: MeasurementBuses,
    topology: Topology,
}

/// Tree orientation rooted at the source bus.
#[derive(Debug, Clone, PartialEq)]
struct Topology {
    /// Buses in breadth-first order from the source.
    order: Vec<usize>,
    /// `(parent bus, branch index)` per bus; `None` for the source.
    parent: Vec<Option<(usize, usize)>>,
}

impl FeederModel {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn source_bus(&self) -> usize {
        0
    }

    pub fn bus_index(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == name)
    }

    /// Buses in breadth-first order from the source.
    pub fn order(&self) -> &[usize] {
        &self.topology.order
    }

    /// Parent bus and connecting branch, `None` for the source bus.
    pub fn parent(&self, bus: usize) -> Option<(usize, usize)> {
        self.topology.parent[bus]
    }

    pub fn branch_impedances_pu(&self) -> Vec<Complex64> {
        self.branches.iter().map(|b| b.impedance_pu(&self.base)).collect()
    }

    /// Bus path from the source to `bus`, inclusive at both ends.
    pub fn path_from_source(&self, bus: usize) -> Vec<usize> {
        let mut path = vec![bus];
        let mut cur = bus;
        while let Some((p, _)) = self.topology.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Aggregate nominal load per bus (pu, drawn).
    pub fn nominal_demand(&self, load_scale: f64) -> Vec<Complex64> {
        let mut demand = vec![Complex64::new(0.0, 0.0); self.bus_count()];
        for load in &self.loads {
            demand[load.bus] += load.s_nominal() * load_scale;
        }
        demand
    }

    pub fn to_description(&self) -> FeederDescription {
        FeederDescription {
            name: self.name.clone(),
            bases: BasesDescription {
                s_base_va: self.base.s_base(),
                v_base_v: self.base.v_base(),
            },
            buses: self.buses.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchDescription {
                    from_bus: self.buses[b.from_bus].clone(),
                    to_bus: self.buses[b.to_bus].clone(),
                    r_per_km: b.r_per_km,
                    x_per_km: b.x_per_km,
                    length_km: b.length_km,
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadDescription {
                    bus: self.buses[l.bus].clone(),
                    p_mw: l.p_nominal * self.base.s_base() / 1e6,
                    pf: l.power_factor,
                })
                .collect(),
            pv_bus: self.buses[self.pv_bus].clone(),
            source_impedance_pu: [self.source_impedance.re, self.source_impedance.im],
            source_emf_pu: self.source_emf,
        }
    }
}

/// Validates a feeder description and converts it to per-unit.
pub fn build_feeder(desc: &FeederDescription) -> Result<FeederModel> {
    let base = PerUnitBase::new(desc.bases.s_base_va, desc.bases.v_base_v)?;

    let n = desc.buses.len();
    if n < 2 {
        return Err(Error::Topology("a feeder needs a source bus and at least one more bus".into()));
    }
    for (i, name) in desc.buses.iter().enumerate() {
        if desc.buses[..i].contains(name) {
            return Err(Error::Topology(format!("duplicate bus '{name}'")));
        }
    }
    let lookup = |name: &str, what: &str| -> Result<usize> {
        desc.buses
            .iter()
            .position(|b| b == name)
            .ok_or_else(|| Error::Topology(format!("{what} references unknown bus '{name}'")))
    };

    let mut branches = Vec::with_capacity(desc.branches.len());
    for (i, b) in desc.branches.iter().enumerate() {
        let from_bus = lookup(&b.from_bus, &format!("branch {i}"))?;
        let to_bus = lookup(&b.to_bus, &format!("branch {i}"))?;
        if from_bus == to_bus {
            return Err(Error::Topology(format!("branch {i} is a self-loop on '{}'", b.from_bus)));
        }
        let ok = b.length_km.is_finite()
            && b.length_km >= 0.0
            && b.r_per_km.is_finite()
            && b.r_per_km >= 0.0
            && b.x_per_km.is_finite()
            && b.x_per_km > 0.0;
        if !ok {
            return Err(Error::Invalid(format!(
                "branch {i}: need length_km >= 0, r_per_km >= 0, x_per_km > 0"
            )));
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            r_per_km: b.r_per_km,
            x_per_km: b.x_per_km,
            length_km: b.length_km,
        });
    }

    let topology = orient_tree(n, &branches)?;

    let mut loads = Vec::with_capacity(desc.loads.len());
    for l in &desc.loads {
        let bus = lookup(&l.bus, "load")?;
        if !(l.p_mw.is_finite() && l.p_mw >= 0.0) || !(l.pf > 0.0 && l.pf <= 1.0) {
            return Err(Error::Invalid(format!(
                "load at '{}': need p_mw >= 0 and 0 < pf <= 1",
                l.bus
            )));
        }
        loads.push(LoadSpec {
            bus,
            p_nominal: l.p_mw * 1e6 / base.s_base(),
            power_factor: l.pf,
        });
    }

    let pv_bus = lookup(&desc.pv_bus, "pv_bus")?;
    if pv_bus == 0 {
        return Err(Error::Topology("PV bus cannot be the source bus".into()));
    }

    let [rs, xs] = desc.source_impedance_pu;
    if !(rs.is_finite() && rs > 0.0 && xs.is_finite() && xs > 0.0) {
        return Err(Error::Invalid(
            "source impedance needs positive resistance and reactance".into(),
        ));
    }
    if !(desc.source_emf_pu.is_finite() && desc.source_emf_pu > 0.0) {
        return Err(Error::Invalid("source EMF must be positive".into()));
    }

    let mut model = FeederModel {
        name: desc.name.clone(),
        base,
        buses: desc.buses.clone(),
        branches,
        loads,
        pv_bus,
        source_impedance: Complex64::new(rs, xs),
        source_emf: desc.source_emf_pu,
        measurement: MeasurementBuses { start: 0, middle: 0, end: 0 },
        topology,
    };
    let path = model.path_from_source(pv_bus);
    model.measurement = MeasurementBuses {
        start: path[1],
        middle: path[path.len() / 2],
        end: pv_bus,
    };
    Ok(model)
}

pub fn load_feeder(path: &Path) -> Result<FeederModel> {
    build_feeder(&FeederDescription::load(path)?)
}

pub fn default_feeder() -> FeederModel {
    build_feeder(&FeederDescription::builtin()).expect("bundled feeder is valid")
}

/// Multiplies every branch length (and so its impedance) by `factor`.
pub fn scale_line_length(model: &FeederModel, factor: f64) -> Result<FeederModel> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Invalid(format!("line length factor must be > 0, got {factor}")));
    }
    let mut scaled = model.clone();
    for b in &mut scaled.branches {
        b.length_km *= factor;
    }
    Ok(scaled)
}

fn orient_tree(n: usize, branches: &[Branch]) -> Result<Topology> {
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, b) in branches.iter().enumerate() {
        adjacency[b.from_bus].push((b.to_bus, i));
        adjacency[b.to_bus].push((b.from_bus, i));
    }

    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(bus) = queue.pop_front() {
        order.push(bus);
        for &(next, branch) in &adjacency[bus] {
            if parent[bus].map(|(_, b)| b) == Some(branch) {
                continue;
            }
            if seen[next] {
                return Err(Error::Topology(format!(
                    "branch {branch} closes a loop; feeder must be radial"
                )));
            }
            seen[next] = true;
            parent[next] = Some((bus, branch));
            queue.push_back(next);
        }
    }
    if order.len() != n {
        let missing: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        return Err(Error::Topology(format!(
            "buses {missing:?} are not connected to the source"
        )));
    }
    Ok(Topology { order, parent })
}
