//! Cristian's algorithm and the Berkeley algorithm.
//!
//! This module holds the estimation arithmetic and the report types. The
//! message exchanges themselves run as events inside [`crate::engine::Engine`];
//! [`cristian_sync`] and [`berkeley_round`] drive one exchange to completion.
//!
//! All timestamps are integer picoseconds read from the participants' clocks.
//! Residuals are measured against ground truth that the participants never see.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::{CorrectionPolicy, SoftwareClock};
use crate::engine::Engine;
use crate::error::{ConfigError, EngineError};
use crate::scalar::Scalar;
use crate::units::{ps_to_secs, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cristian,
    Berkeley,
}

/// One synchronization request, as scheduled by a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum SyncRequest {
    Cristian {
        client: String,
        server: String,
        #[serde(default)]
        policy: CorrectionPolicy,
    },
    Berkeley {
        coordinator: String,
        members: Vec<String>,
        /// Offsets farther than this from the median are left out of the mean.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outlier_threshold_s: Option<f64>,
        #[serde(default)]
        policy: CorrectionPolicy,
    },
}

impl SyncRequest {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            SyncRequest::Cristian { .. } => Algorithm::Cristian,
            SyncRequest::Berkeley { .. } => Algorithm::Berkeley,
        }
    }

    pub fn policy(&self) -> CorrectionPolicy {
        match self {
            SyncRequest::Cristian { policy, .. } | SyncRequest::Berkeley { policy, .. } => *policy,
        }
    }

    /// Every node the request touches, coordinator or client first.
    pub fn participants(&self) -> Vec<String> {
        match self {
            SyncRequest::Cristian { client, server, .. } => vec![client.clone(), server.clone()],
            SyncRequest::Berkeley { coordinator, members, .. } => {
                let mut v = vec![coordinator.clone()];
                v.extend(members.iter().filter(|m| *m != coordinator).cloned());
                v
            }
        }
    }
}

/// Raw timestamps of one request/reply exchange.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncExchange {
    /// The polled node (server for Cristian, member for Berkeley).
    pub peer: String,
    /// Requester clock at request send.
    pub t0_client_ps: i64,
    /// Peer clock when it served the request, as received (possibly forged).
    pub t_server_ps: i64,
    /// Requester clock at reply receipt.
    pub t1_client_ps: i64,
    pub rtt_ps: i64,
    /// True one-way delays; simulator ground truth only.
    pub forward_delay_ps: i64,
    pub backward_delay_ps: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncStatus {
    Completed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub session: u64,
    pub algorithm: Algorithm,
    pub status: SyncStatus,
    pub start_ps: i64,
    pub end_ps: i64,
    /// Correction applied to each participant.
    pub corrections_ps: BTreeMap<String, i64>,
    /// `|C(t) − reference|` once each correction is fully in effect.
    pub residuals_ps: BTreeMap<String, i64>,
    /// `C(t) − reference`, same instants as `residuals_ps`.
    pub signed_residuals_ps: BTreeMap<String, i64>,
    pub messages_sent: u32,
    pub exchanges: Vec<SyncExchange>,
    /// Berkeley offsets left out of the mean.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
    /// Participants lost to timeouts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unreachable: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SyncReport {
    /// Simulated seconds from start to the last correction.
    pub fn convergence_time(&self) -> f64 {
        ps_to_secs(self.end_ps - self.start_ps)
    }

    /// Largest absolute residual, seconds.
    pub fn precision_range(&self) -> f64 {
        ps_to_secs(self.residuals_ps.values().copied().max().unwrap_or(0))
    }

    pub fn correction(&self, node: &str) -> Option<f64> {
        self.corrections_ps.get(node).map(|&ps| ps_to_secs(ps))
    }

    pub fn residual(&self, node: &str) -> Option<f64> {
        self.residuals_ps.get(node).map(|&ps| ps_to_secs(ps))
    }
}

/// `x / 2` rounded half-to-even.
pub fn half(x: i64) -> i64 {
    let q = x.div_euclid(2);
    if x.rem_euclid(2) == 1 && q.rem_euclid(2) == 1 {
        q + 1
    } else {
        q
    }
}

/// Integer mean rounded half-to-even.
pub fn mean_ps(values: &[i64]) -> i64 {
    let n = values.len() as i128;
    assert!(n > 0, "mean of nothing");
    let sum: i128 = values.iter().map(|&v| v as i128).sum();
    let q = sum.div_euclid(n);
    let r = sum.rem_euclid(n);
    let up = match (2 * r).cmp(&n) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => q.rem_euclid(2) == 1,
        std::cmp::Ordering::Less => false,
    };
    (q + i128::from(up)) as i64
}

/// Correction that makes the client read `t_server + rtt/2` at `t1`.
pub fn cristian_correction(t0_client_ps: i64, t_server_ps: i64, t1_client_ps: i64) -> i64 {
    let rtt = t1_client_ps - t0_client_ps;
    t_server_ps + half(rtt) - t1_client_ps
}

/// Peer offset relative to the requester, compensated by half the RTT.
pub fn estimated_offset(t0_ps: i64, t_peer_ps: i64, t1_ps: i64) -> i64 {
    cristian_correction(t0_ps, t_peer_ps, t1_ps)
}

/// Outcome of the Berkeley averaging step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BerkeleyPlan {
    pub mean_ps: i64,
    /// Correction for every reachable participant, coordinator included.
    pub corrections_ps: BTreeMap<String, i64>,
    pub excluded: Vec<String>,
}

fn median_ps(values: &[i64]) -> i64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        mean_ps(&[v[n / 2 - 1], v[n / 2]])
    }
}

/// Averages participant offsets (relative to the coordinator, whose own offset
/// is 0) after discarding those farther than `outlier_threshold_ps` from the
/// median. Every participant, outlier or not, receives `mean − offset`.
pub fn berkeley_plan(coordinator: &str, member_offsets: &BTreeMap<String, i64>, outlier_threshold_ps: Option<i64>) -> BerkeleyPlan {
    let mut all: BTreeMap<String, i64> = member_offsets.clone();
    all.insert(coordinator.to_string(), 0);
    let values: Vec<i64> = all.values().copied().collect();
    let (kept, excluded): (Vec<_>, Vec<_>) = match outlier_threshold_ps {
        Some(th) => {
            let med = median_ps(&values);
            all.iter().partition(|(_, &o)| (o as i128 - med as i128).abs() <= th as i128)
        }
        None => (all.iter().collect(), Vec::new()),
    };
    let kept_values: Vec<i64> = kept.iter().map(|(_, &o)| o).collect();
    let mean = if kept_values.is_empty() { 0 } else { mean_ps(&kept_values) };
    let corrections_ps = all.iter().map(|(id, &o)| (id.clone(), mean - o)).collect();
    BerkeleyPlan { mean_ps: mean, corrections_ps, excluded: excluded.into_iter().map(|(id, _)| id.clone()).collect() }
}

/// Applies `delta_ps` to `clock` under `policy` starting at `now`.
pub fn apply_correction<S: Scalar>(
    clock: &mut SoftwareClock<S>,
    delta_ps: i64,
    policy: CorrectionPolicy,
    now: SimTime,
) -> Result<SimTime, ConfigError> {
    clock.apply_correction(delta_ps, policy, now)
}

/// Runs one Cristian exchange from the engine's current time to completion.
pub fn cristian_sync(engine: &mut Engine, client: &str, server: &str, policy: CorrectionPolicy) -> Result<SyncReport, EngineError> {
    engine.run_sync(SyncRequest::Cristian { client: client.into(), server: server.into(), policy })
}

/// Runs one Berkeley round from the engine's current time to completion.
pub fn berkeley_round(
    engine: &mut Engine,
    coordinator: &str,
    members: &[&str],
    outlier_threshold_s: Option<f64>,
    policy: CorrectionPolicy,
) -> Result<SyncReport, EngineError> {
    engine.run_sync(SyncRequest::Berkeley {
        coordinator: coordinator.into(),
        members: members.iter().map(|m| m.to_string()).collect(),
        outlier_threshold_s,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: i64 = 1_000_000_000;

    #[test]
    fn half_rounds_to_even() {
        assert_eq!(half(4), 2);
        assert_eq!(half(5), 2);
        assert_eq!(half(7), 4);
        assert_eq!(half(-5), -2);
        assert_eq!(half(-7), -4);
    }

    #[test]
    fn mean_rounds_to_even() {
        assert_eq!(mean_ps(&[1, 2]), 2);
        assert_eq!(mean_ps(&[0, 1]), 0);
        assert_eq!(mean_ps(&[10 * MS, -4 * MS, 0]), 2 * MS);
        assert_eq!(mean_ps(&[i64::MAX, i64::MAX]), i64::MAX);
    }

    #[test]
    fn cristian_symmetric_is_exact() {
        // server perfect, client +2 s, 3 ms each way
        let (t0, f, b, off) = (0, 3 * MS, 3 * MS, 2_000 * MS);
        let delta = cristian_correction(t0 + off, t0 + f, t0 + f + b + off);
        assert_eq!(delta, -off);
    }

    #[test]
    fn cristian_asymmetric_error() {
        let (f, b) = (5 * MS, 15 * MS);
        let delta = cristian_correction(0, f, f + b);
        // after correction the client reads f + b + delta at true time f + b
        assert_eq!(delta, (f - b) / 2);
    }

    #[test]
    fn berkeley_three_clocks() {
        let offsets = BTreeMap::from([("m1".to_string(), 10 * MS), ("m2".to_string(), -4 * MS)]);
        let plan = berkeley_plan("c", &offsets, None);
        assert_eq!(plan.mean_ps, 2 * MS);
        assert_eq!(plan.corrections_ps["m1"], -8 * MS);
        assert_eq!(plan.corrections_ps["m2"], 6 * MS);
        assert_eq!(plan.corrections_ps["c"], 2 * MS);
        assert!(plan.excluded.is_empty());
    }

    #[test]
    fn berkeley_fixed_point() {
        let offsets = BTreeMap::from([("m1".to_string(), 0), ("m2".to_string(), 0)]);
        let plan = berkeley_plan("c", &offsets, Some(1));
        assert!(plan.corrections_ps.values().all(|&c| c == 0));
    }

    #[test]
    fn berkeley_outlier_still_corrected() {
        let offsets = BTreeMap::from([("far".to_string(), 10_000 * MS), ("m2".to_string(), -4 * MS)]);
        let plan = berkeley_plan("c", &offsets, Some(1_000 * MS));
        assert_eq!(plan.excluded, vec!["far".to_string()]);
        assert_eq!(plan.mean_ps, -2 * MS);
        assert_eq!(plan.corrections_ps["far"], -10_002 * MS);
        assert_eq!(plan.corrections_ps["c"], -2 * MS);
    }

    #[test]
    fn participants_skip_coordinator_in_members() {
        let r = SyncRequest::Berkeley {
            coordinator: "c".into(),
            members: vec!["a".into(), "c".into(), "b".into()],
            outlier_threshold_s: None,
            policy: CorrectionPolicy::Step,
        };
        assert_eq!(r.participants(), vec!["c", "a", "b"]);
    }
}
