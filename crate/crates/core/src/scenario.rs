//! Scenario files: one TOML document with `config`, `clocks`, `nodes`,
//! `links`, `sync`, `attacks` and `workload` sections.
//!
//! Loading expands clock presets into explicit parameters, so writing a loaded
//! scenario back out produces a canonical file that loads to the same value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, AttackSpec};
use crate::clock::{ClockParameters, ClockPreset, ModelKind, OffsetTable};
use crate::engine::{Engine, EngineConfig};
use crate::error::EngineError;
use crate::gnss::JitterBound;
use crate::sync::SyncRequest;
use crate::topology::{LinkSpec, MediumSpeeds, NetworkGraph, NodeSpec, Violation};
use crate::units::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated run length, seconds.
    pub duration_s: f64,
    pub medium_speeds: MediumSpeeds,
    pub sync_message_bits: f64,
    pub timeout_factor: f64,
    pub fallback_timeout_s: f64,
    pub server_service_s: f64,
    pub trace_attack_edges: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            seed: e.seed,
            duration_s: 1.0,
            medium_speeds: MediumSpeeds::default(),
            sync_message_bits: e.sync_message_bits,
            timeout_factor: e.timeout_factor,
            fallback_timeout_s: e.fallback_timeout_s,
            server_service_s: e.server_service_s,
            trace_attack_edges: e.trace_attack_edges,
        }
    }
}

impl SimConfig {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            seed: self.seed,
            sync_message_bits: self.sync_message_bits,
            timeout_factor: self.timeout_factor,
            fallback_timeout_s: self.fallback_timeout_s,
            server_service_s: self.server_service_s,
            trace_attack_edges: self.trace_attack_edges,
        }
    }
}

/// A clock definition as written in a file: an optional preset plus overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockDef {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<ClockPreset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<OffsetTable>,
    /// `[lo, hi)` nanoseconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_ns: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_locked: Option<bool>,
}

impl ClockDef {
    pub fn expand(&self) -> Result<ClockParameters<f64>, String> {
        let mut p = match self.preset {
            Some(preset) => ClockParameters::from_preset(preset),
            None => ClockParameters { model: ModelKind::Quadratic, ..ClockParameters::perfect() },
        };
        if let Some(m) = self.model {
            p.model = m;
        }
        if let Some(v) = self.alpha0_s {
            p.alpha0 = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.noise_sigma_s {
            p.noise_sigma = v;
        }
        if let Some(t) = &self.table {
            p.table = Some(t.clone());
            if self.model.is_none() {
                p.model = ModelKind::UserDefined;
            }
        }
        if let Some((lo, hi)) = self.jitter_ns {
            p.jitter = Some(JitterBound::new(lo, hi));
        }
        if let Some(l) = self.gamma_locked {
            p.gamma_locked = l;
        }
        if p.gamma_locked && p.gamma != 0.0 {
            return Err(format!("gamma is locked to 0 for this clock, got {}", p.gamma));
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    /// Fully explicit definition of `p`, with no preset.
    pub fn explicit(p: &ClockParameters<f64>) -> Self {
        Self {
            preset: None,
            model: Some(p.model),
            alpha0_s: Some(p.alpha0),
            beta: Some(p.beta),
            gamma: Some(p.gamma),
            noise_sigma_s: Some(p.noise_sigma),
            table: p.table.clone(),
            jitter_ns: p.jitter.as_ref().map(|j| (j.lo_ns, j.hi_ns)),
            gamma_locked: Some(p.gamma_locked),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSync {
    pub time_s: f64,
    #[serde(flatten)]
    pub request: SyncRequest,
}

/// Background traffic: `count` messages spaced `interval_s` apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadItem {
    pub source: String,
    pub destination: String,
    pub size_bits: f64,
    pub time_s: f64,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default)]
    pub interval_s: f64,
}

fn one() -> u32 {
    1
}

/// File layout, before validation.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    config: SimConfig,
    #[serde(default)]
    clocks: BTreeMap<String, ClockDef>,
    #[serde(default)]
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    links: Vec<LinkSpec>,
    #[serde(default)]
    sync: Vec<ScheduledSync>,
    #[serde(default)]
    attacks: Vec<AttackSpec>,
    #[serde(default)]
    workload: Vec<WorkloadItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    /// Expanded clock definitions by name.
    pub clocks: BTreeMap<String, ClockParameters<f64>>,
    pub graph: NetworkGraph,
    pub sync_schedule: Vec<ScheduledSync>,
    pub attacks: Vec<AttackSpec>,
    pub workload: Vec<WorkloadItem>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

fn violation(entity: &str, message: impl Into<String>) -> Violation {
    Violation { entity: entity.to_string(), message: message.into() }
}

fn non_negative(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut errors = Vec::new();
    let mut clocks = BTreeMap::new();
    for (name, def) in &file.clocks {
        match def.expand() {
            Ok(p) => {
                clocks.insert(name.clone(), p);
            }
            Err(msg) => errors.push(violation(name, msg)),
        }
    }
    let scenario = Scenario {
        graph: NetworkGraph::with_speeds(file.nodes, file.links, file.config.medium_speeds),
        config: file.config,
        clocks,
        sync_schedule: file.sync,
        attacks: file.attacks,
        workload: file.workload,
    };
    errors.extend(scenario.validate());
    if errors.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(errors))
    }
}

/// Canonical TOML form of `s`, with every clock written out explicitly.
pub fn scenario_to_toml(s: &Scenario) -> String {
    let file = ScenarioFile {
        config: s.config.clone(),
        clocks: s.clocks.iter().map(|(k, p)| (k.clone(), ClockDef::explicit(p))).collect(),
        nodes: s.graph.nodes().to_vec(),
        links: s.graph.links().to_vec(),
        sync: s.sync_schedule.clone(),
        attacks: s.attacks.clone(),
        workload: s.workload.clone(),
    };
    toml::to_string(&file).expect("scenarios always serialize")
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_toml(s)).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

impl Scenario {
    /// Every cross-reference and parameter check; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.graph.validate();
        let c = &self.config;
        if !non_negative(c.duration_s) {
            out.push(violation("config", format!("duration_s must be >= 0, got {}", c.duration_s)));
        }
        if !non_negative(c.sync_message_bits) {
            out.push(violation("config", format!("sync_message_bits must be >= 0, got {}", c.sync_message_bits)));
        }
        if !(c.timeout_factor > 0.0 && c.timeout_factor.is_finite()) {
            out.push(violation("config", format!("timeout_factor must be > 0, got {}", c.timeout_factor)));
        }
        if !(c.fallback_timeout_s > 0.0 && c.fallback_timeout_s.is_finite()) {
            out.push(violation("config", format!("fallback_timeout_s must be > 0, got {}", c.fallback_timeout_s)));
        }
        if !non_negative(c.server_service_s) {
            out.push(violation("config", format!("server_service_s must be >= 0, got {}", c.server_service_s)));
        }

        for n in self.graph.nodes() {
            if let Some(clock) = &n.clock {
                if !self.clocks.contains_key(clock) {
                    out.push(violation(&n.id, format!("references undefined clock `{clock}`")));
                }
            }
        }

        for (i, s) in self.sync_schedule.iter().enumerate() {
            let entity = format!("sync[{i}]");
            if !non_negative(s.time_s) {
                out.push(violation(&entity, format!("time_s must be >= 0, got {}", s.time_s)));
            }
            if let Err(e) = s.request.policy().validate() {
                out.push(violation(&entity, e.to_string()));
            }
            if let SyncRequest::Berkeley { outlier_threshold_s: Some(th), .. } = &s.request {
                if !(*th > 0.0 && th.is_finite()) {
                    out.push(violation(&entity, format!("outlier_threshold_s must be > 0, got {th}")));
                }
            }
            let participants = s.request.participants();
            if participants.len() < 2 {
                out.push(violation(&entity, "needs at least two distinct participants"));
            }
            let mut ok = true;
            for p in &participants {
                match self.graph.node(p) {
                    None => {
                        out.push(violation(p, format!("{entity} references absent node `{p}`")));
                        ok = false;
                    }
                    Some(n) if n.clock.is_none() => {
                        out.push(violation(p, format!("{entity} participant has no clock")));
                        ok = false;
                    }
                    _ => {}
                }
            }
            if ok {
                let reach = self.graph.component_of(&participants[0]);
                for p in &participants[1..] {
                    if !reach.contains(p) {
                        out.push(violation(p, format!("{entity}: not reachable from `{}`", participants[0])));
                    }
                }
            }
        }

        for (i, a) in self.attacks.iter().enumerate() {
            let entity = format!("attacks[{i}]");
            if let Some(msg) = a.check() {
                out.push(violation(&entity, msg));
            }
            match self.graph.node(&a.target) {
                None => out.push(violation(&a.target, format!("{entity} targets absent node `{}`", a.target))),
                Some(n) => {
                    let needs_router = !matches!(a.kind, AttackKind::IpSpoof { .. });
                    if needs_router && !n.is_router() {
                        out.push(violation(&a.target, format!("{entity}: {} must target a router", a.kind.name())));
                    }
                }
            }
        }

        for (i, w) in self.workload.iter().enumerate() {
            let entity = format!("workload[{i}]");
            for end in [&w.source, &w.destination] {
                if !self.graph.contains(end) {
                    out.push(violation(end, format!("{entity} references absent node `{end}`")));
                }
            }
            if !non_negative(w.size_bits) {
                out.push(violation(&entity, format!("size_bits must be >= 0, got {}", w.size_bits)));
            }
            if !non_negative(w.time_s) || !non_negative(w.interval_s) {
                out.push(violation(&entity, "time_s and interval_s must be >= 0"));
            }
        }
        out
    }

    /// Parameters of the clock each node runs, keyed by node id.
    pub fn node_clocks(&self) -> BTreeMap<String, ClockParameters<f64>> {
        self.graph
            .nodes()
            .iter()
            .filter_map(|n| Some((n.id.clone(), self.clocks.get(n.clock.as_ref()?)?.clone())))
            .collect()
    }

    /// Engine loaded with this scenario's clocks, attacks, sync schedule and
    /// workload, using `seed` in place of the configured one when given.
    pub fn build_engine(&self, seed: Option<u64>) -> Result<Engine, EngineError> {
        let mut config = self.config.engine_config();
        if let Some(s) = seed {
            config.seed = s;
        }
        let mut engine = Engine::new(self.graph.clone(), self.node_clocks(), self.attacks.clone(), config);
        for s in &self.sync_schedule {
            engine.start_sync(SimTime::from_secs(s.time_s), s.request.clone())?;
        }
        for w in &self.workload {
            for k in 0..w.count {
                let t = SimTime::from_secs(w.time_s + f64::from(k) * w.interval_s);
                engine.send_message(&w.source, &w.destination, w.size_bits, t)?;
            }
        }
        Ok(engine)
    }
}
