//! Path delay: router processing, transmission, and propagation terms.
//!
//! Every component is computed in `f64`, rounded half-to-even to integer
//! picoseconds per hop, and only then summed. The total is therefore exactly
//! the sum of its parts on every platform.

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackTag, NetworkView};
use crate::error::{DelayError, DomainError, PathBlocked};
use crate::topology::{FlagQuery, LinkSpec};
use crate::units::{round_ps, PS_PER_SECOND};

/// Store-and-forward time for one hop, seconds.
pub fn transmission_delay(size_bits: f64, bandwidth_bps: f64) -> Result<f64, DomainError> {
    Ok(transmission_delay_ps(size_bits, bandwidth_bps)? as f64 / PS_PER_SECOND)
}

pub fn transmission_delay_ps(size_bits: f64, bandwidth_bps: f64) -> Result<i64, DomainError> {
    if !(bandwidth_bps > 0.0) {
        return Err(DomainError::NonPositiveBandwidth(bandwidth_bps));
    }
    if !(size_bits >= 0.0) {
        return Err(DomainError::NegativeSize(size_bits));
    }
    Ok(round_ps(size_bits * PS_PER_SECOND / bandwidth_bps))
}

/// Signal flight time over one hop, seconds.
pub fn propagation_delay(distance_m: f64, speed_mps: f64) -> Result<f64, DomainError> {
    Ok(propagation_delay_ps(distance_m, speed_mps)? as f64 / PS_PER_SECOND)
}

pub fn propagation_delay_ps(distance_m: f64, speed_mps: f64) -> Result<i64, DomainError> {
    if !(speed_mps > 0.0) {
        return Err(DomainError::NonPositiveSpeed(speed_mps));
    }
    if !(distance_m >= 0.0) {
        return Err(DomainError::NegativeDistance(distance_m));
    }
    Ok(round_ps(distance_m * PS_PER_SECOND / speed_mps))
}

/// Transmission time summed over `(size, bandwidth)` hops.
pub fn path_transmission_ps(size_bits: f64, bandwidths: &[f64]) -> Result<i64, DomainError> {
    bandwidths.iter().map(|&bw| transmission_delay_ps(size_bits, bw)).sum()
}

/// Propagation time summed over `(distance, speed)` hops.
pub fn path_propagation_ps(hops: &[(f64, f64)]) -> Result<i64, DomainError> {
    hops.iter().map(|&(d, v)| propagation_delay_ps(d, v)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Router,
    Transmission,
    Propagation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopDelay {
    /// Router id, or `a~b` link id.
    pub element: String,
    pub component: Component,
    pub ps: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathDelayBreakdown {
    pub router_ps: i64,
    pub transmission_ps: i64,
    pub propagation_ps: i64,
    pub total_ps: i64,
    pub per_hop: Vec<HopDelay>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackTag>,
}

impl PathDelayBreakdown {
    pub fn total_secs(&self) -> f64 {
        self.total_ps as f64 / PS_PER_SECOND
    }
}

/// Link cost in each direction, without router delay.
pub fn link_delay_ps(view: &NetworkView<'_>, link: &LinkSpec, size_bits: f64) -> Result<(i64, i64), DomainError> {
    Ok((
        transmission_delay_ps(size_bits, link.bandwidth_bps)?,
        propagation_delay_ps(link.distance_m, view.graph.speeds().speed(link.medium))?,
    ))
}

fn check_path(view: &NetworkView<'_>, path: &[String]) -> Result<(), DomainError> {
    for id in path {
        if !view.graph.contains(id) {
            return Err(DomainError::UnknownNode(id.clone()));
        }
    }
    Ok(())
}

/// Processing delay of the active routers on `path`, excluding its first node.
///
/// Router delay is charged when a message enters a router, so the originating
/// node never contributes.
pub fn router_path_delay(view: &NetworkView<'_>, path: &[String], q: FlagQuery) -> Result<i64, DelayError> {
    check_path(view, path)?;
    let mut total = 0;
    for id in path.iter().skip(1) {
        let state = view.router_state(id, q)?;
        if !state.active {
            return Err(PathBlocked { router: id.clone() }.into());
        }
        total += state.delay_ps;
    }
    Ok(total)
}

/// Full breakdown for `path` carrying a `size_bits` message at the query.
pub fn total_path_delay(
    view: &NetworkView<'_>,
    path: &[String],
    size_bits: f64,
    q: FlagQuery,
) -> Result<PathDelayBreakdown, DelayError> {
    check_path(view, path)?;
    let mut b = PathDelayBreakdown::default();
    for pair in path.windows(2) {
        let (from, to) = (&pair[0], &pair[1]);
        let link = view
            .graph
            .link_between(from, to)
            .ok_or_else(|| DomainError::NoLink(from.clone(), to.clone()))?;
        let (tx, prop) = link_delay_ps(view, link, size_bits)?;
        let state = view.router_state(to, q)?;
        if !state.active {
            return Err(PathBlocked { router: to.clone() }.into());
        }
        let link_id = format!("{from}~{to}");
        b.per_hop.push(HopDelay { element: link_id.clone(), component: Component::Transmission, ps: tx });
        b.per_hop.push(HopDelay { element: link_id, component: Component::Propagation, ps: prop });
        b.transmission_ps += tx;
        b.propagation_ps += prop;
        if view.graph.node(to).is_some_and(|n| n.is_router()) {
            b.per_hop.push(HopDelay { element: to.clone(), component: Component::Router, ps: state.delay_ps });
            b.router_ps += state.delay_ps;
        }
        b.attacks.extend(state.applied);
    }
    b.total_ps = b.router_ps + b.transmission_ps + b.propagation_ps;
    Ok(b)
}

/// Per-node times at which a message clears each node of `path`, relative to
/// departure. Entry 0 is always 0; the last entry equals the total.
pub fn hop_offsets(path: &[String], breakdown: &PathDelayBreakdown) -> Vec<i64> {
    let mut out = vec![0];
    let mut acc = 0;
    let mut hop = breakdown.per_hop.iter().peekable();
    for next in path.iter().skip(1) {
        // transmission + propagation for the link into `next`
        for _ in 0..2 {
            if let Some(h) = hop.next() {
                acc += h.ps;
            }
        }
        if let Some(h) = hop.peek() {
            if h.component == Component::Router && &h.element == next {
                acc += h.ps;
                hop.next();
            }
        }
        out.push(acc);
    }
    out
}
