//! Network and meter configuration, case-file I/O, bus admittance assembly.
//!
//! Everything is per-unit with angles in radians. Bus ids are dense and
//! 1-based; bus `id` lives at index `id - 1` in every per-bus array.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub is_reference: bool,
    /// Fixed magnitude used by the DC model (pu).
    pub voltage_magnitude: f64,
}

/// A π-model line. Shunt terms apply at each end.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
    pub reactance: f64,
    pub shunt_conductance: f64,
    pub shunt_susceptance: f64,
}

impl Branch {
    /// `1 / (r + jX)`.
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.resistance, self.reactance).inv()
    }

    pub fn shunt_admittance(&self) -> Complex64 {
        Complex64::new(self.shunt_conductance, self.shunt_susceptance)
    }

    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    FlowP,
    FlowQ,
    InjectionP,
    InjectionQ,
    CurrentMagnitude,
    VoltageMagnitude,
}

impl MeasurementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementKind::FlowP => "flow_p",
            MeasurementKind::FlowQ => "flow_q",
            MeasurementKind::InjectionP => "injection_p",
            MeasurementKind::InjectionQ => "injection_q",
            MeasurementKind::CurrentMagnitude => "current_magnitude",
            MeasurementKind::VoltageMagnitude => "voltage_magnitude",
        }
    }

    pub fn is_branch_quantity(self) -> bool {
        matches!(self, MeasurementKind::FlowP | MeasurementKind::FlowQ | MeasurementKind::CurrentMagnitude)
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a meter sits: an ordered branch end (flows are measured leaving
/// `from`) or a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Branch { from: usize, to: usize },
    Bus(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpec {
    pub kind: MeasurementKind,
    pub location: Location,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub base_mva: f64,
}

impl NetworkModel {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn reference_bus(&self) -> usize {
        self.buses.iter().find(|b| b.is_reference).map(|b| b.id).expect("validated network has a reference bus")
    }

    /// Non-reference bus ids in ascending order; this is the angle ordering
    /// of every state vector.
    pub fn free_angle_buses(&self) -> Vec<usize> {
        self.buses.iter().filter(|b| !b.is_reference).map(|b| b.id).collect()
    }

    /// Column of bus `id`'s angle in a free state vector, `None` for the
    /// reference bus.
    pub fn angle_column(&self, id: usize) -> Option<usize> {
        let reference = self.reference_bus();
        match id.cmp(&reference) {
            std::cmp::Ordering::Less => Some(id - 1),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(id - 2),
        }
    }

    pub fn dc_state_dim(&self) -> usize {
        self.n_buses().saturating_sub(1)
    }

    pub fn ac_state_dim(&self) -> usize {
        2 * self.n_buses() - 1
    }

    /// Branches joining `a` and `b`, each with `+1.0` when stored as `a -> b`
    /// and `-1.0` when stored as `b -> a`.
    pub fn branches_between(&self, a: usize, b: usize) -> impl Iterator<Item = (&Branch, f64)> {
        self.branches.iter().filter_map(move |br| {
            if br.from_bus == a && br.to_bus == b {
                Some((br, 1.0))
            } else if br.from_bus == b && br.to_bus == a {
                Some((br, -1.0))
            } else {
                None
            }
        })
    }

    /// Validates the structural invariants shared by parsed and
    /// programmatically built networks.
    pub fn validate(&self) -> Result<()> {
        let n = self.buses.len();
        if n == 0 {
            return Err(Error::MalformedDocument("network has no buses".into()));
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if bus.id != i + 1 {
                return Err(Error::MalformedDocument(format!(
                    "bus ids must be dense 1..{n}; found id {} at position {}",
                    bus.id,
                    i + 1
                )));
            }
            if bus.voltage_magnitude <= 0.0 || !bus.voltage_magnitude.is_finite() {
                return Err(Error::MalformedDocument(format!("bus {} has non-positive voltage magnitude", bus.id)));
            }
        }
        match self.buses.iter().filter(|b| b.is_reference).count() {
            0 => return Err(Error::NoReferenceBus),
            1 => {}
            k => return Err(Error::MultipleReferenceBuses(k)),
        }
        for br in &self.branches {
            for id in [br.from_bus, br.to_bus] {
                if id == 0 || id > n {
                    return Err(Error::DanglingReference(format!(
                        "branch {}-{} references unknown bus {id}",
                        br.from_bus, br.to_bus
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::MalformedDocument(format!("branch {}-{} is a self loop", br.from_bus, br.to_bus)));
            }
            let values = [br.resistance, br.reactance, br.shunt_conductance, br.shunt_susceptance];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedDocument(format!(
                    "branch {}-{} has a non-finite parameter",
                    br.from_bus, br.to_bus
                )));
            }
            if br.reactance == 0.0 {
                return Err(Error::ZeroReactance { from: br.from_bus, to: br.to_bus });
            }
        }
        if let Some(unreached) = first_unreachable_bus(n, &self.branches) {
            return Err(Error::DisconnectedNetwork(unreached));
        }
        Ok(())
    }
}

fn first_unreachable_bus(n: usize, branches: &[Branch]) -> Option<usize> {
    let mut adjacency = vec![Vec::new(); n];
    for br in branches {
        adjacency[br.from_bus - 1].push(br.to_bus - 1);
        adjacency[br.to_bus - 1].push(br.from_bus - 1);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().position(|s| !s).map(|i| i + 1)
}

/// Ordered meter list. Index order is the order of every measurement,
/// residual and attack vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementConfig {
    pub specs: Vec<MeasurementSpec>,
}

impl MeasurementConfig {
    pub fn new(specs: Vec<MeasurementSpec>) -> Self {
        Self { specs }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.sigma).collect()
    }

    pub fn validate(&self, network: &NetworkModel) -> Result<()> {
        let n = network.n_buses();
        for (index, spec) in self.specs.iter().enumerate() {
            if spec.sigma <= 0.0 || !spec.sigma.is_finite() {
                return Err(Error::MalformedDocument(format!("measurement {} has non-positive sigma", index + 1)));
            }
            match (spec.kind.is_branch_quantity(), spec.location) {
                (true, Location::Branch { from, to }) => {
                    if from == 0 || from > n || to == 0 || to > n {
                        return Err(Error::DanglingReference(format!(
                            "measurement {} references unknown bus",
                            index + 1
                        )));
                    }
                    if network.branches_between(from, to).next().is_none() {
                        return Err(Error::DanglingReference(format!(
                            "measurement {} references missing branch {from}-{to}",
                            index + 1
                        )));
                    }
                }
                (false, Location::Bus(bus)) => {
                    if bus == 0 || bus > n {
                        return Err(Error::DanglingReference(format!(
                            "measurement {} references unknown bus {bus}",
                            index + 1
                        )));
                    }
                }
                _ => {
                    return Err(Error::MalformedDocument(format!(
                        "measurement {} ({}) has the wrong kind of location",
                        index + 1,
                        spec.kind
                    )))
                }
            }
        }
        Ok(())
    }
}

/// A parsed case file: network, meters, and the meter readings when the file
/// carries them.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub network: NetworkModel,
    pub measurements: MeasurementConfig,
    pub values: Option<Vec<f64>>,
}

pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDoc {
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
    measurements: Vec<MeterDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: usize,
    #[serde(rename = "ref", default)]
    is_ref: bool,
    #[serde(default = "unit")]
    v: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(default)]
    gs: f64,
    #[serde(default)]
    bs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeterDoc {
    kind: MeasurementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bus: Option<usize>,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

/// Parses and validates a JSON case document.
pub fn parse_case(text: &str) -> Result<Case> {
    let doc: CaseDoc = serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;

    let mut buses: Vec<Bus> =
        doc.buses.iter().map(|b| Bus { id: b.id, is_reference: b.is_ref, voltage_magnitude: b.v }).collect();
    buses.sort_by_key(|b| b.id);
    if buses.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::MalformedDocument("duplicate bus id".into()));
    }

    let branches = doc
        .branches
        .iter()
        .map(|b| Branch {
            from_bus: b.from,
            to_bus: b.to,
            resistance: b.r,
            reactance: b.x,
            shunt_conductance: b.gs,
            shunt_susceptance: b.bs,
        })
        .collect();

    let network = NetworkModel { buses, branches, base_mva: DEFAULT_BASE_MVA };
    network.validate()?;

    let mut specs = Vec::with_capacity(doc.measurements.len());
    for (i, m) in doc.measurements.iter().enumerate() {
        let location = match (m.kind.is_branch_quantity(), m.from, m.to, m.bus) {
            (true, Some(from), Some(to), None) => Location::Branch { from, to },
            (false, None, None, Some(bus)) => Location::Bus(bus),
            _ => {
                return Err(Error::MalformedDocument(format!(
                    "measurement {} ({}) needs {}",
                    i + 1,
                    m.kind,
                    if m.kind.is_branch_quantity() { "`from` and `to` only" } else { "`bus` only" }
                )))
            }
        };
        specs.push(MeasurementSpec { kind: m.kind, location, sigma: m.sigma });
    }
    let measurements = MeasurementConfig::new(specs);
    measurements.validate(&network)?;

    let with_value = doc.measurements.iter().filter(|m| m.value.is_some()).count();
    let values = if with_value == 0 {
        None
    } else if with_value == doc.measurements.len() {
        Some(doc.measurements.iter().map(|m| m.value.unwrap()).collect())
    } else {
        return Err(Error::MalformedDocument("either every measurement carries a value or none does".into()));
    };

    Ok(Case { network, measurements, values })
}

pub fn load_case(path: &Path) -> Result<Case> {
    let text =
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_case(&text)
}

impl Case {
    pub fn to_json(&self) -> String {
        let doc = CaseDoc {
            buses: self
                .network
                .buses
                .iter()
                .map(|b| BusDoc { id: b.id, is_ref: b.is_reference, v: b.voltage_magnitude })
                .collect(),
            branches: self
                .network
                .branches
                .iter()
                .map(|b| BranchDoc {
                    from: b.from_bus,
                    to: b.to_bus,
                    r: b.resistance,
                    x: b.reactance,
                    gs: b.shunt_conductance,
                    bs: b.shunt_susceptance,
                })
                .collect(),
            measurements: self
                .measurements
                .specs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let (from, to, bus) = match s.location {
                        Location::Branch { from, to } => (Some(from), Some(to), None),
                        Location::Bus(b) => (None, None, Some(b)),
                    };
                    MeterDoc { kind: s.kind, from, to, bus, sigma: s.sigma, value: self.values.as_ref().map(|v| v[i]) }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("case document serializes")
    }
}

/// Bus admittance matrix split into conductance and susceptance parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Adjacent bus ids of each bus, indexed by `id - 1`.
    pub neighbors: Vec<BTreeSet<usize>>,
}

impl AdmittanceMatrix {
    /// `G_ij` by bus id.
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[(i - 1, j - 1)]
    }

    /// `B_ij` by bus id.
    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[(i - 1, j - 1)]
    }
}

/// Standard nodal assembly: `Y_ij -= y`, `Y_ii += y + y_shunt` per branch end.
pub fn build_admittance(network: &NetworkModel) -> AdmittanceMatrix {
    let n = network.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut neighbors = vec![BTreeSet::new(); n];
    for br in &network.branches {
        let (i, j) = (br.from_bus - 1, br.to_bus - 1);
        let y = br.series_admittance();
        let ys = br.shunt_admittance();
        g[(i, j)] -= y.re;
        g[(j, i)] -= y.re;
        b[(i, j)] -= y.im;
        b[(j, i)] -= y.im;
        for k in [i, j] {
            g[(k, k)] += y.re + ys.re;
            b[(k, k)] += y.im + ys.im;
        }
        neighbors[i].insert(br.to_bus);
        neighbors[j].insert(br.from_bus);
    }
    AdmittanceMatrix { g, b, neighbors }
}

/// DC susceptance matrix: `Σ 1/X` on the diagonal, `-1/X` off it, resistance
/// and shunts ignored.
pub fn dc_susceptance(network: &NetworkModel) -> DMatrix<f64> {
    let n = network.n_buses();
    let mut m = DMatrix::zeros(n, n);
    for br in &network.branches {
        let (i, j) = (br.from_bus - 1, br.to_bus - 1);
        let s = 1.0 / br.reactance;
        m[(i, i)] += s;
        m[(j, j)] += s;
        m[(i, j)] -= s;
        m[(j, i)] -= s;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub observable: bool,
}

/// Rank test on the DC Jacobian; observable iff rank equals `n - 1`.
pub fn check_observability(network: &NetworkModel, config: &MeasurementConfig) -> Result<ObservabilityReport> {
    let h = measurement::dc_jacobian(network, config)?;
    let rank = linalg::numerical_rank(&h.0);
    Ok(ObservabilityReport { rank, observable: rank == network.dc_state_dim() })
}
