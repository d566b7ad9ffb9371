//! Line-delimited JSON trace records.
//!
//! One record per executed event. Field order is fixed by the struct layout and
//! empty fields are omitted, so a given run always serializes to the same bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::AttackTag;
use crate::delay::PathDelayBreakdown;
use crate::sync::{Algorithm, SyncReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    MessageSend,
    HopArrival,
    Delivery,
    Timeout,
    SyncStep,
    AttackEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageStatus {
    InFlight,
    Delivered,
    Dropped,
    Blocked,
}

impl MessageStatus {
    pub fn is_terminal(self) -> bool {
        self != MessageStatus::InFlight
    }
}

/// Delay components of a route, integer picoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakdownRecord {
    pub router_ps: i64,
    pub transmission_ps: i64,
    pub propagation_ps: i64,
    pub total_ps: i64,
}

impl From<&PathDelayBreakdown> for BreakdownRecord {
    fn from(b: &PathDelayBreakdown) -> Self {
        Self { router_ps: b.router_ps, transmission_ps: b.transmission_ps, propagation_ps: b.propagation_ps, total_ps: b.total_ps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncRecord {
    pub session: u64,
    pub algorithm: Algorithm,
    /// `start`, `request`, `reply`, `poll`, `correction`, `average`, `complete`.
    pub phase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SyncReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub sim_time_ps: i64,
    pub sequence: u64,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_id: Option<u64>,
    /// Nodes involved: `[source, destination]` for messages, `[node]` for hops.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<MessageStatus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub route: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BreakdownRecord>,
    /// Clock readings of the named nodes at `sim_time_ps`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub clock_readings_ps: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TraceRecord {
    pub fn new(sim_time_ps: i64, sequence: u64, kind: RecordKind) -> Self {
        Self {
            sim_time_ps,
            sequence,
            kind,
            message_id: None,
            nodes: Vec::new(),
            status: None,
            route: Vec::new(),
            breakdown: None,
            clock_readings_ps: BTreeMap::new(),
            attacks: Vec::new(),
            sync: None,
            detail: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("trace line {line}: {source}")]
pub struct TraceParseError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

/// Serializes records as newline-terminated JSON lines.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Parses a JSONL trace; blank lines are skipped, unknown kinds and fields rejected.
pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| TraceParseError { line: i + 1, source }))
        .collect()
}

/// Hex SHA-256 of the serialized trace.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First differing record between two traces, by index.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDiff {
    pub identical: bool,
    pub left_records: usize,
    pub right_records: usize,
    pub first_difference: Option<usize>,
    pub differing_records: usize,
}

pub fn diff(left: &[TraceRecord], right: &[TraceRecord]) -> TraceDiff {
    let common = left.len().min(right.len());
    let mut first = None;
    let mut count = left.len().max(right.len()) - common;
    for i in 0..common {
        if left[i] != right[i] {
            count += 1;
            first.get_or_insert(i);
        }
    }
    if first.is_none() && left.len() != right.len() {
        first = Some(common);
    }
    TraceDiff {
        identical: first.is_none(),
        left_records: left.len(),
        right_records: right.len(),
        first_difference: first,
        differing_records: count,
    }
}
