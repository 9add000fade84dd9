//! JSON and CSV formats used by the command-line front end.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opf::{OpfProblem, QuadraticCost};
use crate::power::{Bus, BusKind, Equilibrium, Line, PowerNetwork};
use crate::sgraph::{NodeSetPair, SignedGraph};
use crate::simulate::Trajectory;

pub const REPORT_SCHEMA: u32 = 1;

/// Node identifier as written in the file, either an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Int(i64),
    Str(String),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Int(i) => write!(f, "{i}"),
            NodeId::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        match s.parse::<i64>() {
            Ok(i) => NodeId::Int(i),
            Err(_) => NodeId::Str(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BusKind>,
    #[serde(rename = "V_set", default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone)]
pub enum Network {
    Signed(SignedGraph),
    Power(PowerNetwork),
}

fn finite(x: Option<f64>, what: &str) -> Result<Option<f64>> {
    match x {
        Some(v) if !v.is_finite() => Err(Error::InvalidNetwork(format!("{what} is not finite"))),
        other => Ok(other),
    }
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidNetwork(format!("malformed network file: {e}")))
    }

    pub fn read(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidNetwork(format!("{path}: {e}")))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network file serializes")
    }

    fn index(&self) -> Result<HashMap<NodeId, usize>> {
        let mut idx = HashMap::new();
        for (k, n) in self.nodes.iter().enumerate() {
            if idx.insert(n.id.clone(), k).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
        }
        Ok(idx)
    }

    pub fn into_model(&self) -> Result<Network> {
        let idx = self.index()?;
        let lookup = |id: &NodeId| idx.get(id).copied().ok_or_else(|| Error::InvalidNetwork(format!("edge references unknown node {id}")));
        let n_w = self.edges.iter().filter(|e| e.w.is_some()).count();
        let n_b = self.edges.iter().filter(|e| e.b.is_some()).count();
        if self.edges.iter().any(|e| e.w.is_some() == e.b.is_some()) || (n_w > 0 && n_b > 0) {
            return Err(Error::InvalidNetwork("every edge needs exactly one of w or B, and one schema per file".into()));
        }
        let power = n_b > 0 || (self.edges.is_empty() && self.nodes.iter().any(|n| n.kind.is_some()));
        let labels: Vec<String> = self.nodes.iter().map(|n| n.id.to_string()).collect();
        if !power {
            let mut edges = Vec::with_capacity(self.edges.len());
            for e in &self.edges {
                edges.push((lookup(&e.from)?, lookup(&e.to)?, finite(e.w, "edge weight")?.unwrap()));
            }
            return Ok(Network::Signed(SignedGraph::new(self.nodes.len(), edges)?.with_labels(labels)?));
        }
        let mut buses = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let m = finite(n.m, "M")?;
            let kind = n.kind.unwrap_or(if m.unwrap_or(0.0) > 0.0 { BusKind::Generator } else { BusKind::Load });
            buses.push(Bus {
                id: n.id.to_string(),
                kind,
                v_set: finite(n.v_set, "V_set")?.unwrap_or(1.0),
                m: m.unwrap_or(0.0),
                d: finite(n.d, "D")?.unwrap_or(1.0),
                p: finite(n.p, "P")?.unwrap_or(0.0),
            });
        }
        let mut lines = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            lines.push(Line {
                from: lookup(&e.from)?,
                to: lookup(&e.to)?,
                b: finite(e.b, "B")?.unwrap(),
            });
        }
        Ok(Network::Power(PowerNetwork::new(buses, lines)?))
    }

    pub fn from_graph(g: &SignedGraph) -> Self {
        let id = |k: usize| NodeId::from(g.label(k).as_str());
        NetworkFile {
            nodes: (0..g.node_count())
                .map(|k| NodeRecord {
                    id: id(k),
                    kind: None,
                    v_set: None,
                    m: None,
                    d: None,
                    p: None,
                })
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    from: id(e.i),
                    to: id(e.j),
                    w: Some(e.w),
                    b: None,
                })
                .collect(),
        }
    }

    pub fn from_power(net: &PowerNetwork) -> Self {
        let buses = net.buses();
        let id = |k: usize| NodeId::from(buses[k].id.as_str());
        NetworkFile {
            nodes: buses
                .iter()
                .map(|b| NodeRecord {
                    id: NodeId::from(b.id.as_str()),
                    kind: Some(b.kind),
                    v_set: Some(b.v_set),
                    m: (b.kind == BusKind::Generator).then_some(b.m),
                    d: Some(b.d),
                    p: Some(b.p),
                })
                .collect(),
            edges: net
                .lines()
                .iter()
                .map(|l| EdgeRecord {
                    from: id(l.from),
                    to: id(l.to),
                    w: None,
                    b: Some(l.b),
                })
                .collect(),
        }
    }
}

pub fn read_network(path: &str) -> Result<Network> {
    NetworkFile::read(path)?.into_model()
}

pub fn read_power_network(path: &str) -> Result<PowerNetwork> {
    match read_network(path)? {
        Network::Power(p) => Ok(p),
        Network::Signed(_) => Err(Error::InvalidNetwork(format!("{path} is a signed graph, expected a power network"))),
    }
}

/// Equilibrium file. `P` optionally overrides the network injections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumFile {
    pub reference: NodeId,
    pub theta_deg: BTreeMap<String, f64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<BTreeMap<String, f64>>,
}

impl EquilibriumFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidNetwork(format!("malformed equilibrium file: {e}")))
    }

    pub fn read(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidNetwork(format!("{path}: {e}")))?;
        Self::parse(&text)
    }

    pub fn from_equilibrium(net: &PowerNetwork, eq: &Equilibrium, with_p: bool) -> Self {
        let buses = net.buses();
        let theta_deg = buses.iter().zip(eq.degrees()).map(|(b, d)| (b.id.clone(), d)).collect();
        let p = with_p.then(|| buses.iter().map(|b| (b.id.clone(), b.p)).collect());
        EquilibriumFile {
            reference: NodeId::from(buses[eq.reference].id.as_str()),
            theta_deg,
            p,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("equilibrium file serializes")
    }

    /// Resolves ids against the network; returns the equilibrium and the
    /// network carrying any injections listed in the file.
    pub fn resolve(&self, net: &PowerNetwork) -> Result<(Equilibrium, PowerNetwork)> {
        let n = net.bus_count();
        let mut deg = vec![0.0; n];
        let mut seen = vec![false; n];
        for (id, &v) in &self.theta_deg {
            let k = net.index_of(id).ok_or_else(|| Error::InvalidNetwork(format!("equilibrium names unknown bus {id}")))?;
            if !v.is_finite() {
                return Err(Error::InvalidNetwork(format!("angle at bus {id} is not finite")));
            }
            deg[k] = v;
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidNetwork(format!("equilibrium misses bus {}", net.buses()[k].id)));
        }
        let r = net
            .index_of(&self.reference.to_string())
            .ok_or_else(|| Error::InvalidNetwork(format!("unknown reference bus {}", self.reference)))?;
        let net = match &self.p {
            None => net.clone(),
            Some(map) => {
                let mut p = net.injections();
                for (id, &v) in map {
                    let k = net.index_of(id).ok_or_else(|| Error::InvalidNetwork(format!("injection names unknown bus {id}")))?;
                    p[k] = v;
                }
                net.with_injections(&p)?
            }
        };
        Ok((Equilibrium::from_degrees(&deg, r), net))
    }
}

pub fn read_equilibrium(path: &str, net: &PowerNetwork) -> Result<(Equilibrium, PowerNetwork)> {
    EquilibriumFile::read(path)?.resolve(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCost {
    pub id: NodeId,
    pub c2: f64,
    pub c1: f64,
    #[serde(default)]
    pub c0: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// OPF settings: generator costs and limits plus the line angle limit.
/// Non-generator injections stay fixed at their network values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFile {
    pub generators: Vec<GeneratorCost>,
    pub theta_max_deg: f64,
}

impl CostFile {
    pub fn read(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidProblem(format!("{path}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidProblem(format!("malformed cost file: {e}")))
    }

    pub fn problem(&self, net: &PowerNetwork, g_min: Option<f64>, pair: NodeSetPair) -> Result<OpfProblem> {
        let p = net.injections();
        let mut p_min = p.clone();
        let mut p_max = p;
        let mut cost = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            let k = net
                .index_of(&g.id.to_string())
                .ok_or_else(|| Error::InvalidProblem(format!("cost names unknown bus {}", g.id)))?;
            p_min[k] = g.p_min;
            p_max[k] = g.p_max;
            cost.push((k, QuadraticCost { c2: g.c2, c1: g.c1, c0: g.c0 }));
        }
        let prob = OpfProblem {
            net: net.clone(),
            cost,
            p_min,
            p_max,
            theta_max: self.theta_max_deg.to_radians(),
            g_min,
            pair,
        };
        prob.validate()?;
        Ok(prob)
    }
}

/// Formats with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_trajectory_csv<W: Write>(mut out: W, net: &PowerNetwork, traj: &Trajectory) -> std::io::Result<()> {
    let buses = net.buses();
    let gens = net.generators();
    let mut header = vec!["t".to_string()];
    header.extend(buses.iter().map(|b| format!("theta_{}", b.id)));
    header.extend(gens.iter().map(|&k| format!("omega_{}", buses[k].id)));
    header.push("stable".into());
    writeln!(out, "{}", header.join(","))?;
    let verdict = if traj.stable { "1" } else { "0" };
    for (k, t) in traj.times.iter().enumerate() {
        let mut row = vec![sig6(*t)];
        row.extend(traj.theta[k].iter().map(|x| sig6(x.to_degrees())));
        row.extend(traj.omega[k].iter().map(|x| sig6(*x)));
        row.push(verdict.into());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Parses a comma-separated id list against node labels.
pub fn parse_id_list(list: &str, labels: &[String]) -> Result<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| Error::InvalidPair(format!("unknown node id {s}")))
        })
        .collect()
}

pub fn injections_by_id(net: &PowerNetwork, p: &DVector<f64>) -> BTreeMap<String, f64> {
    net.buses().iter().zip(p.iter()).map(|(b, &v)| (b.id.clone(), v)).collect()
}
