//! Time-sync attacks as windowed mutations of model quantities.
//!
//! - DDoS scales a router's processing delay and may drop traversing messages.
//! - IP spoofing shifts the server timestamp in replies delivered to a victim.
//! - Router hijacking forces a router down or adds processing delay.
//!
//! Outside its window an attack changes nothing, so a run whose attack never
//! overlaps a message is identical to the attack-free run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::rng::{self, Domain};
use crate::topology::{FlagQuery, NetworkGraph};
use crate::units::{round_ps, secs_to_ps, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HijackMode {
    ForceDown,
    AddedDelay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    Ddos {
        delay_multiplier: f64,
        #[serde(default)]
        drop_probability: f64,
    },
    IpSpoof {
        forged_offset_s: f64,
    },
    RouterHijack {
        mode: HijackMode,
        #[serde(default)]
        added_delay_s: f64,
    },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Ddos { .. } => "ddos",
            AttackKind::IpSpoof { .. } => "ip_spoof",
            AttackKind::RouterHijack { .. } => "router_hijack",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    pub target: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, target: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self { kind, target: target.into(), start_s, end_s }
    }

    /// Closed window `[start, end]`.
    pub fn active_at(&self, t: SimTime) -> bool {
        t >= SimTime::from_secs(self.start_s) && t <= SimTime::from_secs(self.end_s)
    }

    pub fn check(&self) -> Option<String> {
        if !(self.start_s.is_finite() && self.end_s.is_finite() && self.start_s <= self.end_s) {
            return Some(format!("attack window [{}, {}] must satisfy start <= end", self.start_s, self.end_s));
        }
        match self.kind {
            AttackKind::Ddos { delay_multiplier, drop_probability } => {
                if !(delay_multiplier >= 1.0 && delay_multiplier.is_finite()) {
                    return Some(format!("delay_multiplier must be >= 1, got {delay_multiplier}"));
                }
                if !(0.0..=1.0).contains(&drop_probability) {
                    return Some(format!("drop_probability {drop_probability} outside [0, 1]"));
                }
            }
            AttackKind::IpSpoof { forged_offset_s } if !forged_offset_s.is_finite() => {
                return Some("forged_offset must be finite".into());
            }
            AttackKind::RouterHijack { added_delay_s, .. } if !(added_delay_s >= 0.0 && added_delay_s.is_finite()) => {
                return Some(format!("added_delay must be >= 0, got {added_delay_s}"));
            }
            _ => {}
        }
        None
    }
}

/// Record that an attack altered a traversal or message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTag {
    pub attack: usize,
    pub kind: String,
    pub target: String,
    pub effect: String,
}

impl AttackTag {
    fn new(index: usize, spec: &AttackSpec, effect: &str) -> Self {
        Self { attack: index, kind: spec.kind.name().to_string(), target: spec.target.clone(), effect: effect.to_string() }
    }
}

/// Router processing delay under a DDoS multiplier.
pub fn apply_ddos(base_delay_ps: i64, delay_multiplier: f64) -> i64 {
    round_ps(base_delay_ps as f64 * delay_multiplier)
}

/// Whether DDoS attack `index` drops message `message_id` at its target.
pub fn ddos_drops(seed: u64, index: usize, spec: &AttackSpec, message_id: u64) -> bool {
    match spec.kind {
        AttackKind::Ddos { drop_probability, .. } if drop_probability > 0.0 => {
            let u: f64 = rng::stream(seed, Domain::AttackDrop, &spec.target, &[index as u64, message_id]).random();
            u < drop_probability
        }
        _ => false,
    }
}

/// Server timestamp as seen by the victim of a spoofed reply.
pub fn apply_ip_spoof(t_server_ps: i64, forged_offset_s: f64) -> i64 {
    t_server_ps + secs_to_ps(forged_offset_s)
}

/// A router as seen by traffic at one instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouterState {
    pub active: bool,
    pub delay_ps: i64,
    pub applied: Vec<AttackTag>,
}

/// The graph as traffic sees it: base router state with active attacks folded in.
#[derive(Clone, Copy, Debug)]
pub struct NetworkView<'a> {
    pub graph: &'a NetworkGraph,
    pub seed: u64,
    pub attacks: &'a [AttackSpec],
}

impl<'a> NetworkView<'a> {
    pub fn new(graph: &'a NetworkGraph, seed: u64, attacks: &'a [AttackSpec]) -> Self {
        Self { graph, seed, attacks }
    }

    pub fn baseline(graph: &'a NetworkGraph, seed: u64) -> Self {
        Self { graph, seed, attacks: &[] }
    }

    /// Same graph and seed without attacks.
    pub fn without_attacks(&self) -> Self {
        Self { attacks: &[], ..*self }
    }

    pub fn active_attacks(&self, t: SimTime) -> impl Iterator<Item = (usize, &'a AttackSpec)> {
        self.attacks.iter().enumerate().filter(move |(_, a)| a.active_at(t))
    }

    /// State of `id` at the query. Non-routers are always active with zero delay.
    pub fn router_state(&self, id: &str, q: FlagQuery) -> Result<RouterState, DomainError> {
        let node = self.graph.node(id).ok_or_else(|| DomainError::UnknownNode(id.to_string()))?;
        if !node.is_router() {
            return Ok(RouterState { active: true, delay_ps: 0, applied: Vec::new() });
        }
        let mut active = node.router_flag(q, self.seed)?;
        let mut delay_ps = node.router_delay_ps();
        let mut applied = Vec::new();
        for (i, a) in self.active_attacks(q.t).filter(|(_, a)| a.target == id) {
            match a.kind {
                AttackKind::Ddos { delay_multiplier, .. } => {
                    delay_ps = apply_ddos(delay_ps, delay_multiplier);
                    applied.push(AttackTag::new(i, a, "delay_multiplied"));
                }
                AttackKind::RouterHijack { mode: HijackMode::ForceDown, .. } => {
                    active = false;
                    applied.push(AttackTag::new(i, a, "forced_down"));
                }
                AttackKind::RouterHijack { mode: HijackMode::AddedDelay, added_delay_s } => {
                    delay_ps += secs_to_ps(added_delay_s);
                    applied.push(AttackTag::new(i, a, "added_delay"));
                }
                AttackKind::IpSpoof { .. } => {}
            }
        }
        Ok(RouterState { active, delay_ps, applied })
    }

    /// Spoofs a reply timestamp bound for `destination`, if any spoof is active.
    pub fn spoof_reply(&self, destination: &str, t: SimTime, t_server_ps: i64) -> (i64, Vec<AttackTag>) {
        let mut ts = t_server_ps;
        let mut tags = Vec::new();
        for (i, a) in self.active_attacks(t).filter(|(_, a)| a.target == destination) {
            if let AttackKind::IpSpoof { forged_offset_s } = a.kind {
                ts = apply_ip_spoof(ts, forged_offset_s);
                tags.push(AttackTag::new(i, a, "timestamp_forged"));
            }
        }
        (ts, tags)
    }

    /// First DDoS drop hitting a message that traverses `hops` at time `t`.
    /// Returns the hop index of the dropping router.
    pub fn drop_point(&self, hops: &[String], t: SimTime, message_id: u64) -> Option<(usize, AttackTag)> {
        for (k, hop) in hops.iter().enumerate().skip(1) {
            for (i, a) in self.active_attacks(t).filter(|(_, a)| &a.target == hop) {
                if ddos_drops(self.seed, i, a, message_id) {
                    return Some((k, AttackTag::new(i, a, "dropped")));
                }
            }
        }
        None
    }
}
