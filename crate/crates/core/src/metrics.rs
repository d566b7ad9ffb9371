//! Run summaries computed from a finished trace.

use serde::{Deserialize, Serialize};

use crate::sync::{Algorithm, SyncStatus};
use crate::trace::{MessageStatus, RecordKind, TraceRecord};
use crate::units::ps_to_secs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncMetrics {
    pub session: u64,
    pub algorithm: Algorithm,
    pub status: SyncStatus,
    /// Largest absolute residual, nanoseconds.
    pub precision_range_ns: f64,
    pub messages_sent: u32,
    pub convergence_time_s: f64,
}

/// Sum, mean and max of one delay component over routed messages, seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub total_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
}

impl DelayStats {
    fn from_ps(values: &[i64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let total: i64 = values.iter().sum();
        Self {
            total_s: ps_to_secs(total),
            mean_s: ps_to_secs(total) / values.len() as f64,
            max_s: ps_to_secs(values.iter().copied().max().unwrap_or(0)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub syncs: Vec<SyncMetrics>,
    pub completed_syncs: usize,
    pub aborted_syncs: usize,
    /// Worst precision range over completed sessions, nanoseconds.
    pub worst_precision_range_ns: f64,
    pub sync_messages_sent: u64,
    pub mean_convergence_time_s: f64,
    pub messages_sent: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub blocked: usize,
    pub in_flight: usize,
    /// Router processing time ("inside the machine").
    pub host_delay: DelayStats,
    /// Transmission plus propagation time.
    pub network_delay: DelayStats,
}

pub fn metrics_report(trace: &[TraceRecord]) -> MetricsReport {
    let mut m = MetricsReport::default();
    let mut host = Vec::new();
    let mut network = Vec::new();
    for r in trace {
        match r.kind {
            RecordKind::MessageSend => {
                m.messages_sent += 1;
                if r.status == Some(MessageStatus::Blocked) {
                    m.blocked += 1;
                }
                if let Some(b) = &r.breakdown {
                    host.push(b.router_ps);
                    network.push(b.transmission_ps + b.propagation_ps);
                }
            }
            RecordKind::Delivery => m.delivered += 1,
            RecordKind::HopArrival if r.status == Some(MessageStatus::Dropped) => m.dropped += 1,
            RecordKind::SyncStep => {
                let Some(rep) = r.sync.as_ref().and_then(|s| s.report.as_ref()) else { continue };
                m.syncs.push(SyncMetrics {
                    session: rep.session,
                    algorithm: rep.algorithm,
                    status: rep.status,
                    precision_range_ns: rep.residuals_ps.values().copied().max().unwrap_or(0) as f64 / 1e3,
                    messages_sent: rep.messages_sent,
                    convergence_time_s: rep.convergence_time(),
                });
            }
            _ => {}
        }
    }
    m.in_flight = m.messages_sent - m.delivered - m.dropped - m.blocked;
    m.host_delay = DelayStats::from_ps(&host);
    m.network_delay = DelayStats::from_ps(&network);
    let done: Vec<&SyncMetrics> = m.syncs.iter().filter(|s| s.status == SyncStatus::Completed).collect();
    m.completed_syncs = done.len();
    m.aborted_syncs = m.syncs.len() - done.len();
    m.worst_precision_range_ns = done.iter().map(|s| s.precision_range_ns).fold(0.0, f64::max);
    m.sync_messages_sent = m.syncs.iter().map(|s| u64::from(s.messages_sent)).sum();
    if !done.is_empty() {
        m.mean_convergence_time_s = done.iter().map(|s| s.convergence_time_s).sum::<f64>() / done.len() as f64;
    }
    m
}
