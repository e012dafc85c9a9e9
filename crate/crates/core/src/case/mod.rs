//! Network cases in MATPOWER format.
//!
//! A [`NetworkCase`] is immutable once validated. Physical quantities are kept
//! in the units of the case file (MW, MVAr, degrees); the `*_pu` accessors
//! convert onto the system base.

mod parse;
mod write;
mod ybus;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::parse_case;
pub use write::write_matpower;
pub use ybus::{build_ybus, BranchAdmittance, SparseComplex};

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("missing block mpc.{0}")]
    MissingBlock(String),
    #[error("malformed row in mpc.{block} at line {line}: {reason}")]
    MalformedRow {
        block: String,
        line: usize,
        reason: String,
    },
    #[error("{kind} references bus {id}, which is not in mpc.bus")]
    DanglingReference { kind: String, id: u32 },
    #[error("case has no slack bus")]
    NoSlackBus,
    #[error("case has {0} slack buses, expected exactly one")]
    MultipleSlackBuses(usize),
    #[error("invalid {kind} {index}: {reason}")]
    InvalidField {
        kind: String,
        index: usize,
        reason: String,
    },
    #[error("case json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusType {
    PQ,
    PV,
    Slack,
}

impl BusType {
    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            1 => Some(BusType::PQ),
            2 => Some(BusType::PV),
            3 => Some(BusType::Slack),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BusType::PQ => 1,
            BusType::PV => 2,
            BusType::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub bus_type: BusType,
    /// Active load, MW.
    pub pd: f64,
    /// Reactive load, MVAr.
    pub qd: f64,
    /// Shunt conductance, MW at 1 p.u.
    pub gs: f64,
    /// Shunt susceptance, MVAr at 1 p.u.
    pub bs: f64,
    pub vm: f64,
    /// Voltage angle, degrees.
    pub va: f64,
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus_id: u32,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub status: bool,
    pub pmax: f64,
    pub pmin: f64,
    /// Polynomial cost coefficients in $/h, highest degree first (MATPOWER order).
    pub cost: Vec<f64>,
}

impl Generator {
    /// Cost in $/h at `p` MW.
    pub fn cost_at(&self, p: f64) -> f64 {
        self.cost.iter().fold(0.0, |acc, c| acc * p + c)
    }

    /// Marginal cost in $/MWh at `p` MW.
    pub fn marginal_cost_at(&self, p: f64) -> f64 {
        let n = self.cost.len();
        self.cost
            .iter()
            .enumerate()
            .take(n.saturating_sub(1))
            .fold(0.0, |acc, (k, c)| acc * p + c * (n - 1 - k) as f64)
    }

    /// Quadratic and linear coefficients `(c2, c1)`; higher degrees are rejected at parse time.
    pub fn quadratic_terms(&self) -> (f64, f64) {
        match self.cost.len() {
            0 | 1 => (0.0, 0.0),
            2 => (0.0, self.cost[0]),
            n => (self.cost[n - 3], self.cost[n - 2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// Long-term MVA rating; zero means unlimited.
    pub s_max: f64,
    /// Off-nominal ratio as written in the file; zero means 1.0.
    pub tap: f64,
    /// Phase shift, degrees.
    pub shift: f64,
    pub status: bool,
}

impl Branch {
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }

    pub fn is_rated(&self) -> bool {
        self.s_max > 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    #[serde(skip)]
    bus_index: HashMap<u32, usize>,
}

impl PartialEq for NetworkCase {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.generators == other.generators
            && self.branches == other.branches
    }
}

impl NetworkCase {
    /// Validates the raw tables and builds the dense bus index.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self, CaseError> {
        let mut case = NetworkCase {
            name: name.into(),
            base_mva,
            buses,
            generators,
            branches,
            bus_index: HashMap::new(),
        };
        case.validate()?;
        Ok(case)
    }

    fn validate(&mut self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::InvalidField {
                kind: "baseMVA".into(),
                index: 0,
                reason: format!("must be positive, got {}", self.base_mva),
            });
        }
        self.bus_index.clear();
        for (k, bus) in self.buses.iter().enumerate() {
            if self.bus_index.insert(bus.id, k).is_some() {
                return Err(invalid("bus", k, format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.vmin > 0.0) || bus.vmin > bus.vmax {
                return Err(invalid(
                    "bus",
                    k,
                    format!("voltage bounds [{}, {}]", bus.vmin, bus.vmax),
                ));
            }
        }
        let slack = self
            .buses
            .iter()
            .filter(|b| b.bus_type == BusType::Slack)
            .count();
        match slack {
            0 => return Err(CaseError::NoSlackBus),
            1 => {}
            n => return Err(CaseError::MultipleSlackBuses(n)),
        }
        for (k, g) in self.generators.iter().enumerate() {
            if !self.bus_index.contains_key(&g.bus_id) {
                return Err(CaseError::DanglingReference {
                    kind: "generator".into(),
                    id: g.bus_id,
                });
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(invalid("generator", k, "min limit above max limit".into()));
            }
            if g.status && g.cost.is_empty() {
                return Err(invalid("generator", k, "in-service unit without cost".into()));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            for id in [br.from_bus, br.to_bus] {
                if !self.bus_index.contains_key(&id) {
                    return Err(CaseError::DanglingReference {
                        kind: "branch".into(),
                        id,
                    });
                }
            }
            if br.status && br.x == 0.0 {
                return Err(invalid("branch", k, "zero series reactance".into()));
            }
            if br.s_max < 0.0 {
                return Err(invalid("branch", k, "negative rating".into()));
            }
        }
        Ok(())
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    /// Dense index of an external bus number.
    pub fn bus_idx(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    /// Indices (into `generators`) of in-service units, in file order.
    pub fn active_generators(&self) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&g| self.generators[g].status)
            .collect()
    }

    pub fn n_active_gen(&self) -> usize {
        self.generators.iter().filter(|g| g.status).count()
    }

    /// Dense bus indices hosting at least one in-service generator, ordered by
    /// first appearance in the generator table.
    pub fn generator_buses(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for g in self.generators.iter().filter(|g| g.status) {
            let idx = self.bus_index[&g.bus_id];
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    /// Position (within [`active_generators`](Self::active_generators)) of the
    /// unit that balances the system at the slack bus.
    pub fn slack_generator(&self) -> Option<usize> {
        let slack = self.slack_bus();
        self.active_generators()
            .iter()
            .position(|&g| self.bus_index[&self.generators[g].bus_id] == slack)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.status)
    }

    pub fn pd(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.pd).collect()
    }

    pub fn qd(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.qd).collect()
    }

    pub fn pd_pu(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.pd / self.base_mva).collect()
    }

    pub fn qd_pu(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.qd / self.base_mva).collect()
    }

    /// `(pmin, pmax)` of in-service generators in p.u.
    pub fn pg_limits_pu(&self) -> Vec<(f64, f64)> {
        self.generators
            .iter()
            .filter(|g| g.status)
            .map(|g| (g.pmin / self.base_mva, g.pmax / self.base_mva))
            .collect()
    }

    /// Total cost in $/h of a dispatch given per active generator, in MW.
    pub fn total_cost(&self, pg: &[f64]) -> f64 {
        self.active_generators()
            .iter()
            .zip(pg)
            .map(|(&g, &p)| self.generators[g].cost_at(p))
            .sum()
    }

    /// Canonical JSON: fixed key order, shortest round-trip float formatting.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let mut case: NetworkCase =
            serde_json::from_str(text).map_err(|e| CaseError::Json(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    /// Loads a case from a path, or from a bundled name such as `case14`.
    pub fn load(path_or_name: &str) -> Result<Self, CaseLoadError> {
        if let Some(text) = bundled(path_or_name) {
            return Ok(parse_case(text)?);
        }
        let text = std::fs::read_to_string(path_or_name)?;
        let mut case = parse_case(&text)?;
        if case.name.is_empty() {
            case.name = std::path::Path::new(path_or_name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(case)
    }
}

#[derive(Debug, Error)]
pub enum CaseLoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Case(#[from] CaseError),
}

fn invalid(kind: &str, index: usize, reason: String) -> CaseError {
    CaseError::InvalidField {
        kind: kind.into(),
        index,
        reason,
    }
}

/// IEEE test cases shipped with the crate.
pub const BUNDLED_CASES: [&str; 3] = ["case14", "case30", "case57"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "case14" => Some(include_str!("../../data/case14.m")),
        "case30" => Some(include_str!("../../data/case30.m")),
        "case57" => Some(include_str!("../../data/case57.m")),
        _ => None,
    }
}

/// Operating-condition variant of a test case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CaseVariant {
    #[default]
    Typical,
    Api,
    Sad,
}

impl CaseVariant {
    /// Resolves a bundled case name for this variant. Only the typical
    /// operating point ships with the crate; other variants must be given as
    /// explicit file paths.
    pub fn resolve(self, name: &str) -> Option<&'static str> {
        match self {
            CaseVariant::Typical => bundled(name),
            CaseVariant::Api | CaseVariant::Sad => None,
        }
    }
}
