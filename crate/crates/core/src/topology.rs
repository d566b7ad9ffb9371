//! Network graph: clients, time servers, routers, and the links between them.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::rng::{self, Domain};
use crate::units::{secs_to_ps, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Client,
    TimeServer,
    Router,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    Wifi,
    #[default]
    Regular,
}

impl RouterKind {
    /// Per-traversal processing delay when none is configured, seconds.
    pub fn default_delay(self) -> f64 {
        match self {
            RouterKind::Wifi => 500e-6,
            RouterKind::Regular => 50e-6,
        }
    }
}

/// Router availability over time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FailureModel {
    #[default]
    AlwaysActive,
    AlwaysFailed,
    /// Independent failure per traversal attempt.
    Bernoulli { failure_probability: f64 },
    /// Up for `up_s`, then down for `down_s`, repeating from t = 0.
    Alternating { up_s: f64, down_s: f64 },
}

impl FailureModel {
    fn check(&self) -> Option<String> {
        match *self {
            FailureModel::Bernoulli { failure_probability: p } if !(0.0..=1.0).contains(&p) => {
                Some(format!("failure_probability {p} outside [0, 1]"))
            }
            FailureModel::Alternating { up_s, down_s }
                if !(up_s >= 0.0 && down_s >= 0.0 && up_s.is_finite() && down_s.is_finite() && up_s + down_s > 0.0) =>
            {
                Some(format!("alternating durations up={up_s} down={down_s} must be >= 0 with a positive period"))
            }
            _ => None,
        }
    }
}

/// When a router's flag is evaluated: the wall-clock instant plus the
/// traversal epoch that keys Bernoulli draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlagQuery {
    pub t: SimTime,
    pub epoch: u64,
}

impl FlagQuery {
    pub fn new(t: SimTime, epoch: u64) -> Self {
        Self { t, epoch }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub router_kind: Option<RouterKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub router_delay_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureModel>,
    /// Name of the clock definition this node runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<String>,
}

impl NodeSpec {
    pub fn client(id: impl Into<String>, clock: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::Client, router_kind: None, router_delay_s: None, failure: None, clock: Some(clock.into()) }
    }

    pub fn time_server(id: impl Into<String>, clock: impl Into<String>) -> Self {
        Self { kind: NodeKind::TimeServer, ..Self::client(id, clock) }
    }

    pub fn router(id: impl Into<String>, kind: RouterKind, delay_s: f64) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Router,
            router_kind: Some(kind),
            router_delay_s: Some(delay_s),
            failure: Some(FailureModel::AlwaysActive),
            clock: None,
        }
    }

    pub fn with_failure(mut self, failure: FailureModel) -> Self {
        self.failure = Some(failure);
        self
    }

    pub fn is_router(&self) -> bool {
        self.kind == NodeKind::Router
    }

    /// Router processing delay in seconds; 0 for non-routers.
    pub fn router_delay(&self) -> f64 {
        if !self.is_router() {
            return 0.0;
        }
        self.router_delay_s.unwrap_or_else(|| self.router_kind.unwrap_or_default().default_delay())
    }

    pub fn router_delay_ps(&self) -> i64 {
        secs_to_ps(self.router_delay())
    }

    /// Activity indicator: `true` when the router forwards traffic.
    pub fn router_flag(&self, q: FlagQuery, seed: u64) -> Result<bool, DomainError> {
        if !self.is_router() {
            return Err(DomainError::NotARouter(self.id.clone()));
        }
        Ok(match self.failure.unwrap_or_default() {
            FailureModel::AlwaysActive => true,
            FailureModel::AlwaysFailed => false,
            FailureModel::Bernoulli { failure_probability } => {
                let u: f64 = rng::stream(seed, Domain::RouterFlag, &self.id, &[q.epoch]).random();
                u >= failure_probability
            }
            FailureModel::Alternating { up_s, down_s } => {
                let up = secs_to_ps(up_s);
                let period = up + secs_to_ps(down_s);
                q.t.ps().rem_euclid(period) < up
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Fiber,
    Copper,
    Wireless,
    Satellite,
}

impl Medium {
    pub fn name(self) -> &'static str {
        match self {
            Medium::Fiber => "fiber",
            Medium::Copper => "copper",
            Medium::Wireless => "wireless",
            Medium::Satellite => "satellite",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ConfigError> {
        Ok(match name {
            "fiber" => Medium::Fiber,
            "copper" => Medium::Copper,
            "wireless" => Medium::Wireless,
            "satellite" => Medium::Satellite,
            other => return Err(ConfigError::invalid(format!("unknown medium `{other}`"))),
        })
    }
}

/// Signal propagation speed per medium, m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediumSpeeds {
    pub fiber: f64,
    pub copper: f64,
    pub wireless: f64,
    pub satellite: f64,
}

impl Default for MediumSpeeds {
    fn default() -> Self {
        Self { fiber: 2.0e8, copper: 2.0e8, wireless: 2.998e8, satellite: 2.998e8 }
    }
}

impl MediumSpeeds {
    pub fn speed(&self, medium: Medium) -> f64 {
        match medium {
            Medium::Fiber => self.fiber,
            Medium::Copper => self.copper,
            Medium::Wireless => self.wireless,
            Medium::Satellite => self.satellite,
        }
    }
}

/// Default propagation speed for `medium`.
pub fn medium_speed(medium: Medium) -> f64 {
    MediumSpeeds::default().speed(medium)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub bandwidth_bps: f64,
    pub distance_m: f64,
    pub medium: Medium,
}

impl LinkSpec {
    pub fn new(a: impl Into<String>, b: impl Into<String>, bandwidth_bps: f64, distance_m: f64, medium: Medium) -> Self {
        Self { a: a.into(), b: b.into(), bandwidth_bps, distance_m, medium }
    }

    pub fn other(&self, end: &str) -> Option<&str> {
        if self.a == end {
            Some(&self.b)
        } else if self.b == end {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn id(&self) -> String {
        format!("{}~{}", self.a, self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

fn violation(entity: &str, message: impl Into<String>) -> Violation {
    Violation { entity: entity.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    speeds: MediumSpeeds,
    index: BTreeMap<String, usize>,
    adjacency: BTreeMap<String, Vec<usize>>,
}

impl NetworkGraph {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Self {
        Self::with_speeds(nodes, links, MediumSpeeds::default())
    }

    pub fn with_speeds(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>, speeds: MediumSpeeds) -> Self {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        let mut adjacency: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            adjacency.entry(l.a.clone()).or_default().push(i);
            if l.b != l.a {
                adjacency.entry(l.b.clone()).or_default().push(i);
            }
        }
        Self { nodes, links, speeds, index, adjacency }
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn speeds(&self) -> &MediumSpeeds {
        &self.speeds
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Links incident to `id`, in declaration order.
    pub fn incident(&self, id: &str) -> impl Iterator<Item = &LinkSpec> {
        self.adjacency.get(id).into_iter().flatten().map(|&i| &self.links[i])
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&LinkSpec> {
        self.incident(a).find(|l| l.other(a) == Some(b))
    }

    pub fn router_flag(&self, id: &str, q: FlagQuery, seed: u64) -> Result<bool, DomainError> {
        self.node(id).ok_or_else(|| DomainError::UnknownNode(id.to_string()))?.router_flag(q, seed)
    }

    /// Nodes reachable from `from` ignoring router state.
    pub fn component_of(&self, from: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from.to_string()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            for l in self.incident(&n) {
                if let Some(o) = l.other(&n) {
                    if !seen.contains(o) {
                        stack.push(o.to_string());
                    }
                }
            }
        }
        seen
    }

    /// Checks every structural invariant; an empty list means the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                out.push(violation(&n.id, "duplicate node id"));
            }
            if n.is_router() {
                if let Some(d) = n.router_delay_s {
                    if !(d >= 0.0 && d.is_finite()) {
                        out.push(violation(&n.id, format!("router_delay must be non-negative, got {d}")));
                    }
                }
                if let Some(msg) = n.failure.and_then(|f| f.check()) {
                    out.push(violation(&n.id, msg));
                }
            } else {
                if n.router_delay_s.is_some() {
                    out.push(violation(&n.id, "router_delay set on a non-router node"));
                }
                if n.router_kind.is_some() {
                    out.push(violation(&n.id, "router_kind set on a non-router node"));
                }
                if n.failure.is_some() {
                    out.push(violation(&n.id, "failure model set on a non-router node"));
                }
                if n.clock.is_none() {
                    out.push(violation(&n.id, "clients and time servers need a clock"));
                }
                if self.incident(&n.id).next().is_none() {
                    out.push(violation(&n.id, "node is not connected to the graph"));
                }
            }
        }

        let mut pairs = BTreeSet::new();
        for l in &self.links {
            let id = l.id();
            for end in [&l.a, &l.b] {
                if !self.contains(end) {
                    out.push(violation(end, format!("link {id} references absent node `{end}`")));
                }
            }
            if l.a == l.b {
                out.push(violation(&id, "self-loop"));
            }
            let key = if l.a <= l.b { (l.a.as_str(), l.b.as_str()) } else { (l.b.as_str(), l.a.as_str()) };
            if !pairs.insert(key) {
                out.push(violation(&id, "more than one link between the same pair"));
            }
            if !(l.bandwidth_bps > 0.0 && l.bandwidth_bps.is_finite()) {
                out.push(violation(&id, format!("bandwidth must be > 0, got {}", l.bandwidth_bps)));
            }
            if !(l.distance_m >= 0.0 && l.distance_m.is_finite()) {
                out.push(violation(&id, format!("distance must be >= 0, got {}", l.distance_m)));
            }
        }

        for m in [Medium::Fiber, Medium::Copper, Medium::Wireless, Medium::Satellite] {
            let s = self.speeds.speed(m);
            if !(s > 0.0 && s.is_finite()) {
                out.push(violation(m.name(), format!("medium speed must be > 0, got {s}")));
            }
        }
        out
    }
}
