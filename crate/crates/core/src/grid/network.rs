use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Opaque bus label taken verbatim from the network file.
pub type BusId = String;

pub const NETWORK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read network file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported network schema_version {0}")]
    SchemaVersion(u32),
    #[error("duplicate bus {0:?}")]
    DuplicateBus(BusId),
    #[error("duplicate branch id {0:?}")]
    DuplicateBranch(String),
    #[error("duplicate breaker id {0:?}")]
    DuplicateBreaker(String),
    #[error("slack bus {0:?} is not listed in buses")]
    MissingSlack(BusId),
    #[error("{context} references unknown bus {bus:?}")]
    UnknownBus { context: String, bus: BusId },
    #[error("branch {branch:?} has invalid impedance (need r >= 0 and |z| > 0)")]
    BadImpedance { branch: String },
    #[error("branch {branch:?} closes a cycle")]
    Cycle { branch: String },
    #[error("bus {0:?} is not connected to the slack bus")]
    Disconnected(BusId),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub id: String,
    /// Parent end, toward the slack bus.
    pub from: BusId,
    pub to: BusId,
    /// Series impedance, per unit.
    pub z: Complex<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec<T> {
    pub node: BusId,
    /// Consumed power, per unit (positive = consumption).
    pub s_nominal: Complex<T>,
    pub breaker_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec<T> {
    pub node: BusId,
    /// Injected power, per unit (positive = generation).
    pub s: Complex<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct Topology {
    index: HashMap<BusId, usize>,
    slack: usize,
    /// Branch feeding each bus from its parent; `None` for the slack.
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Buses in breadth-first order from the slack.
    order: Vec<usize>,
    branch_from: Vec<usize>,
    branch_to: Vec<usize>,
    has_injection: Vec<bool>,
}

/// Validated radial feeder. Branches are stored parent→child.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel<T> {
    buses: Vec<BusId>,
    slack: BusId,
    branches: Vec<Branch<T>>,
    loads: Vec<LoadSpec<T>>,
    generators: Vec<GenSpec<T>>,
    base_voltage: f64,
    base_power: f64,
    topo: Topology,
}

impl<T: Real> NetworkModel<T> {
    pub fn new(
        buses: Vec<BusId>,
        slack: BusId,
        branches: Vec<Branch<T>>,
        loads: Vec<LoadSpec<T>>,
        generators: Vec<GenSpec<T>>,
        base_voltage: f64,
        base_power: f64,
    ) -> Result<Self, NetworkError> {
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.clone(), i).is_some() {
                return Err(NetworkError::DuplicateBus(b.clone()));
            }
        }
        let slack_idx = *index
            .get(&slack)
            .ok_or_else(|| NetworkError::MissingSlack(slack.clone()))?;
        if !(base_voltage.is_finite() && base_power.is_finite()) {
            return Err(NetworkError::NonFinite("base quantities".into()));
        }

        let lookup = |bus: &BusId, context: String| {
            index
                .get(bus)
                .copied()
                .ok_or_else(|| NetworkError::UnknownBus {
                    context,
                    bus: bus.clone(),
                })
        };

        let mut branch_ids = HashSet::new();
        let mut ends = Vec::with_capacity(branches.len());
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); buses.len()];
        for (bi, br) in branches.iter().enumerate() {
            if !branch_ids.insert(br.id.clone()) {
                return Err(NetworkError::DuplicateBranch(br.id.clone()));
            }
            if !(br.z.re.is_finite() && br.z.im.is_finite()) {
                return Err(NetworkError::NonFinite(format!("branch {:?}", br.id)));
            }
            if br.z.re < T::zero() || br.z.norm() <= T::zero() {
                return Err(NetworkError::BadImpedance {
                    branch: br.id.clone(),
                });
            }
            let a = lookup(&br.from, format!("branch {:?}", br.id))?;
            let b = lookup(&br.to, format!("branch {:?}", br.id))?;
            if a == b {
                return Err(NetworkError::Cycle {
                    branch: br.id.clone(),
                });
            }
            adjacency[a].push((b, bi));
            adjacency[b].push((a, bi));
            ends.push((a, b));
        }

        // Breadth-first from the slack; reaching a visited bus through an unused branch is a cycle.
        let n = buses.len();
        let mut parent = vec![None; n];
        let mut visited = vec![false; n];
        let mut used = vec![false; branches.len()];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack_idx]);
        visited[slack_idx] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, bi) in &adjacency[u] {
                if used[bi] {
                    continue;
                }
                used[bi] = true;
                if visited[v] {
                    return Err(NetworkError::Cycle {
                        branch: branches[bi].id.clone(),
                    });
                }
                visited[v] = true;
                parent[v] = Some(bi);
                queue.push_back(v);
            }
        }
        if let Some(i) = visited.iter().position(|&seen| !seen) {
            return Err(NetworkError::Disconnected(buses[i].clone()));
        }

        let mut branches = branches;
        let mut branch_from = vec![0; branches.len()];
        let mut branch_to = vec![0; branches.len()];
        let mut children = vec![Vec::new(); n];
        for (bus, p) in parent.iter().enumerate() {
            if let Some(bi) = *p {
                let (a, b) = ends[bi];
                let from = if a == bus { b } else { a };
                branch_from[bi] = from;
                branch_to[bi] = bus;
                children[from].push(bi);
                let br = &mut branches[bi];
                if br.to != buses[bus] {
                    std::mem::swap(&mut br.from, &mut br.to);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }

        let mut has_injection = vec![false; n];
        let mut breakers = HashSet::new();
        for load in &loads {
            let i = lookup(&load.node, "load".into())?;
            if !(load.s_nominal.re.is_finite() && load.s_nominal.im.is_finite()) {
                return Err(NetworkError::NonFinite(format!("load at {:?}", load.node)));
            }
            if let Some(id) = &load.breaker_id {
                if !breakers.insert(id.clone()) {
                    return Err(NetworkError::DuplicateBreaker(id.clone()));
                }
            }
            has_injection[i] = true;
        }
        for gen in &generators {
            let i = lookup(&gen.node, "generator".into())?;
            if !(gen.s.re.is_finite() && gen.s.im.is_finite()) {
                return Err(NetworkError::NonFinite(format!("generator at {:?}", gen.node)));
            }
            has_injection[i] = true;
        }

        Ok(Self {
            buses,
            slack,
            branches,
            loads,
            generators,
            base_voltage,
            base_power,
            topo: Topology {
                index,
                slack: slack_idx,
                parent,
                children,
                order,
                branch_from,
                branch_to,
                has_injection,
            },
        })
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn slack(&self) -> &BusId {
        &self.slack
    }

    pub fn slack_index(&self) -> usize {
        self.topo.slack
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn loads(&self) -> &[LoadSpec<T>] {
        &self.loads
    }

    pub fn generators(&self) -> &[GenSpec<T>] {
        &self.generators
    }

    pub fn base_voltage(&self) -> f64 {
        self.base_voltage
    }

    pub fn base_power(&self) -> f64 {
        self.base_power
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn bus_index(&self, bus: &str) -> Option<usize> {
        self.topo.index.get(bus).copied()
    }

    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.topo.parent[bus]
    }

    pub fn child_branches(&self, bus: usize) -> &[usize] {
        &self.topo.children[bus]
    }

    /// Buses in breadth-first order rooted at the slack.
    pub fn bus_order(&self) -> &[usize] {
        &self.topo.order
    }

    pub fn branch_from(&self, branch: usize) -> usize {
        self.topo.branch_from[branch]
    }

    pub fn branch_to(&self, branch: usize) -> usize {
        self.topo.branch_to[branch]
    }

    /// True for a non-slack bus with no load or generator attached.
    pub fn is_junction(&self, bus: usize) -> bool {
        bus != self.topo.slack && !self.topo.has_injection[bus]
    }

    /// Branches on the path from `bus` up to the slack, nearest first.
    pub fn path_to_slack(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = bus;
        while let Some(bi) = self.topo.parent[cur] {
            path.push(bi);
            cur = self.topo.branch_from[bi];
        }
        path
    }

    /// Net consumed power per bus for the given connected loads plus all generators.
    pub fn net_demand<'a>(
        &self,
        active_loads: impl IntoIterator<Item = &'a LoadSpec<T>>,
    ) -> Result<Vec<Complex<T>>, NetworkError>
    where
        T: 'a,
    {
        let mut demand = vec![Complex::new(T::zero(), T::zero()); self.bus_count()];
        for load in active_loads {
            let i = self
                .bus_index(&load.node)
                .ok_or_else(|| NetworkError::UnknownBus {
                    context: "active load".into(),
                    bus: load.node.clone(),
                })?;
            demand[i] += load.s_nominal;
        }
        for gen in &self.generators {
            let i = self.bus_index(&gen.node).expect("validated generator bus");
            demand[i] -= gen.s;
        }
        Ok(demand)
    }

    /// Node voltages from a slack voltage and branch currents by accumulating
    /// `z·i` drops from the slack outward.
    pub fn voltages_from_currents(
        &self,
        slack_voltage: Complex<T>,
        branch_currents: &[Complex<T>],
    ) -> Vec<Complex<T>> {
        assert_eq!(branch_currents.len(), self.branch_count());
        let mut v = vec![Complex::new(T::zero(), T::zero()); self.bus_count()];
        v[self.topo.slack] = slack_voltage;
        for &bus in &self.topo.order[1..] {
            let bi = self.topo.parent[bus].expect("non-slack bus has a parent");
            v[bus] = v[self.topo.branch_from[bi]] - self.branches[bi].z * branch_currents[bi];
        }
        v
    }

    /// Converts the scalar type of every impedance and power.
    pub fn cast<U: Real>(&self) -> NetworkModel<U> {
        let c = |z: Complex<T>| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy()));
        NetworkModel {
            buses: self.buses.clone(),
            slack: self.slack.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    id: b.id.clone(),
                    from: b.from.clone(),
                    to: b.to.clone(),
                    z: c(b.z),
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadSpec {
                    node: l.node.clone(),
                    s_nominal: c(l.s_nominal),
                    breaker_id: l.breaker_id.clone(),
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GenSpec {
                    node: g.node.clone(),
                    s: c(g.s),
                })
                .collect(),
            base_voltage: self.base_voltage,
            base_power: self.base_power,
            topo: self.topo.clone(),
        }
    }

    pub fn to_file(&self) -> NetworkFile {
        let f = |x: T| x.to_f64_lossy();
        NetworkFile {
            schema_version: NETWORK_SCHEMA_VERSION,
            name: None,
            base_voltage: self.base_voltage,
            base_power: self.base_power,
            slack: self.slack.clone(),
            buses: self.buses.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    id: b.id.clone(),
                    from: b.from.clone(),
                    to: b.to.clone(),
                    r: f(b.z.re),
                    x: f(b.z.im),
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadRecord {
                    node: l.node.clone(),
                    p: f(l.s_nominal.re),
                    q: f(l.s_nominal.im),
                    breaker: l.breaker_id.clone(),
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GenRecord {
                    node: g.node.clone(),
                    p: f(g.s.re),
                    q: f(g.s.im),
                })
                .collect(),
        }
    }
}

/// On-disk network document (see `schemas/network.schema.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Volts.
    pub base_voltage: f64,
    /// Volt-amperes.
    pub base_power: f64,
    pub slack: BusId,
    pub buses: Vec<BusId>,
    pub branches: Vec<BranchRecord>,
    #[serde(default)]
    pub loads: Vec<LoadRecord>,
    #[serde(default)]
    pub generators: Vec<GenRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: String,
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRecord {
    pub node: BusId,
    pub p: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaker: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRecord {
    pub node: BusId,
    pub p: f64,
    pub q: f64,
}

impl NetworkFile {
    pub fn into_model<T: Real>(self) -> Result<NetworkModel<T>, NetworkError> {
        if self.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(NetworkError::SchemaVersion(self.schema_version));
        }
        let c = |re: f64, im: f64| Complex::new(T::lit(re), T::lit(im));
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NetworkError::NonFinite(what.to_string()))
            }
        };
        for b in &self.branches {
            finite(b.r, "branch r")?;
            finite(b.x, "branch x")?;
        }
        for l in &self.loads {
            finite(l.p, "load p")?;
            finite(l.q, "load q")?;
        }
        for g in &self.generators {
            finite(g.p, "generator p")?;
            finite(g.q, "generator q")?;
        }
        NetworkModel::new(
            self.buses,
            self.slack,
            self.branches
                .into_iter()
                .map(|b| Branch {
                    id: b.id,
                    from: b.from,
                    to: b.to,
                    z: c(b.r, b.x),
                })
                .collect(),
            self.loads
                .into_iter()
                .map(|l| LoadSpec {
                    node: l.node,
                    s_nominal: c(l.p, l.q),
                    breaker_id: l.breaker,
                })
                .collect(),
            self.generators
                .into_iter()
                .map(|g| GenSpec {
                    node: g.node,
                    s: c(g.p, g.q),
                })
                .collect(),
            self.base_voltage,
            self.base_power,
        )
    }
}

pub fn parse_network<T: Real>(json: &str) -> Result<NetworkModel<T>, NetworkError> {
    serde_json::from_str::<NetworkFile>(json)?.into_model()
}

/// Reads and validates a network document.
pub fn load_network<T: Real>(path: impl AsRef<Path>) -> Result<NetworkModel<T>, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text)
}
