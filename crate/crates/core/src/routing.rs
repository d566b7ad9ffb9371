//! Least-delay routing with Dijkstra's algorithm.
//!
//! Edge weights depend on the message (transmission time scales with size) and
//! on router state at the query instant, so every message is routed on its own.
//! A directed edge `u -> v` costs the link's transmission and propagation time
//! plus `v`'s processing delay when `v` is an active router; an inactive router
//! removes all edges into it. Only routers forward traffic: clients and time
//! servers appear solely as path endpoints.
//!
//! Ties are broken by hop count, then by the lexicographic order of the node-id
//! sequence, so a query always yields the same route.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::attacks::NetworkView;
use crate::delay::{link_delay_ps, total_path_delay, PathDelayBreakdown};
use crate::error::{DelayError, DomainError, NoRoute, RoundTripError};
use crate::topology::{FlagQuery, LinkSpec};
use crate::units::SimTime;

#[derive(Clone, Debug, PartialEq)]
pub struct RouteQuery {
    pub source: String,
    pub destination: String,
    pub query_time: SimTime,
    pub message_size_bits: f64,
    /// Keys per-traversal failure sampling.
    pub message_id: u64,
}

impl RouteQuery {
    pub fn new(source: impl Into<String>, destination: impl Into<String>, t: SimTime, size_bits: f64, message_id: u64) -> Self {
        Self { source: source.into(), destination: destination.into(), query_time: t, message_size_bits: size_bits, message_id }
    }

    pub fn flag_query(&self) -> FlagQuery {
        FlagQuery::new(self.query_time, self.message_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub hops: Vec<String>,
    pub breakdown: PathDelayBreakdown,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error(transparent)]
    NoRoute(#[from] NoRoute),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("source and destination are both `{0}`")]
    SameEndpoints(String),
}

/// Cost of traversing `link` from `from` into `downstream`, or `None` when
/// `downstream` is an inactive router.
pub fn edge_weight(
    view: &NetworkView<'_>,
    link: &LinkSpec,
    downstream: &str,
    query: &RouteQuery,
) -> Result<Option<i64>, DomainError> {
    let state = view.router_state(downstream, query.flag_query())?;
    if !state.active {
        return Ok(None);
    }
    let (tx, prop) = link_delay_ps(view, link, query.message_size_bits)?;
    Ok(Some(tx + prop + state.delay_ps))
}

type Label = (i64, usize, Vec<String>);

/// Minimum-delay route for `query` under the current view.
pub fn shortest_path(view: &NetworkView<'_>, query: &RouteQuery) -> Result<Route, RoutingError> {
    let (src, dst) = (query.source.as_str(), query.destination.as_str());
    for id in [src, dst] {
        if !view.graph.contains(id) {
            return Err(DomainError::UnknownNode(id.to_string()).into());
        }
    }
    if src == dst {
        return Err(RoutingError::SameEndpoints(src.to_string()));
    }

    let mut best: BTreeMap<String, Label> = BTreeMap::new();
    let mut settled: BTreeMap<String, ()> = BTreeMap::new();
    let mut heap: BinaryHeap<Reverse<Label>> = BinaryHeap::new();
    let start: Label = (0, 0, vec![src.to_string()]);
    best.insert(src.to_string(), start.clone());
    heap.push(Reverse(start));

    while let Some(Reverse((cost, hops, path))) = heap.pop() {
        let node = path.last().expect("labels are non-empty").clone();
        if settled.contains_key(&node) {
            continue;
        }
        settled.insert(node.clone(), ());
        if node == dst {
            let breakdown = total_path_delay(view, &path, query.message_size_bits, query.flag_query()).map_err(|e| match e {
                DelayError::Domain(d) => RoutingError::Domain(d),
                DelayError::Blocked(_) => unreachable!("dijkstra never enters an inactive router"),
            })?;
            debug_assert_eq!(breakdown.total_ps, cost);
            return Ok(Route { hops: path, breakdown });
        }
        // Only the source and routers forward.
        let forwards = node == src || view.graph.node(&node).is_some_and(|n| n.is_router());
        if !forwards {
            continue;
        }
        for link in view.graph.incident(&node) {
            let Some(next) = link.other(&node) else { continue };
            if settled.contains_key(next) {
                continue;
            }
            let Some(w) = edge_weight(view, link, next, query)? else { continue };
            let mut next_path = path.clone();
            next_path.push(next.to_string());
            let label: Label = (cost + w, hops + 1, next_path);
            let improves = best.get(next).is_none_or(|cur| label < *cur);
            if improves {
                best.insert(next.to_string(), label.clone());
                heap.push(Reverse(label));
            }
        }
    }
    Err(NoRoute { source_node: src.to_string(), destination: dst.to_string() }.into())
}

/// Independent forward and backward routes, evaluated at their own send times.
#[allow(clippy::too_many_arguments)]
pub fn round_trip_routes(
    view: &NetworkView<'_>,
    src: &str,
    dst: &str,
    t_send: SimTime,
    t_reply: SimTime,
    sizes_bits: (f64, f64),
    message_ids: (u64, u64),
) -> Result<(Route, Route), RoundTripError> {
    assert!(t_reply >= t_send, "reply cannot precede the request");
    let fwd = shortest_path(view, &RouteQuery::new(src, dst, t_send, sizes_bits.0, message_ids.0));
    let bwd = shortest_path(view, &RouteQuery::new(dst, src, t_reply, sizes_bits.1, message_ids.1));
    let as_no_route = |r: &Result<Route, RoutingError>, from: &str, to: &str| match r {
        Ok(_) => None,
        Err(RoutingError::NoRoute(n)) => Some(n.clone()),
        Err(_) => Some(NoRoute { source_node: from.to_string(), destination: to.to_string() }),
    };
    match (fwd, bwd) {
        (Ok(f), Ok(b)) => Ok((f, b)),
        (f, b) => Err(RoundTripError { forward: as_no_route(&f, src, dst), backward: as_no_route(&b, dst, src) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{FailureModel, Medium, NetworkGraph, NodeSpec, RouterKind};

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn q(src: &str, dst: &str) -> RouteQuery {
        RouteQuery::new(src, dst, SimTime::ZERO, 0.0, 0)
    }

    /// a --(10 ms)-- b directly, and a -- r -- b costing 3 ms in total.
    fn triangle(r_failure: FailureModel) -> NetworkGraph {
        NetworkGraph::new(
            vec![
                NodeSpec::client("a", "k"),
                NodeSpec::time_server("b", "k"),
                NodeSpec::router("r", RouterKind::Regular, 1e-3).with_failure(r_failure),
            ],
            vec![
                LinkSpec::new("a", "b", 1e9, 2e6, Medium::Fiber),
                LinkSpec::new("a", "r", 1e9, 1e5, Medium::Fiber),
                LinkSpec::new("r", "b", 1e9, 3e5, Medium::Fiber),
            ],
        )
    }

    #[test]
    fn edge_weight_example() {
        let g = NetworkGraph::new(
            vec![NodeSpec::client("c", "k"), NodeSpec::router("r", RouterKind::Regular, 50e-6)],
            vec![LinkSpec::new("c", "r", 1e9, 1e5, Medium::Fiber)],
        );
        let v = NetworkView::baseline(&g, 0);
        let query = RouteQuery::new("c", "r", SimTime::ZERO, 12000.0, 0);
        assert_eq!(edge_weight(&v, &g.links()[0], "r", &query).unwrap(), Some(562_000_000));

        let down = NetworkGraph::new(
            vec![NodeSpec::client("c", "k"), NodeSpec::router("r", RouterKind::Regular, 50e-6).with_failure(FailureModel::AlwaysFailed)],
            g.links().to_vec(),
        );
        assert_eq!(edge_weight(&NetworkView::baseline(&down, 0), &down.links()[0], "r", &query).unwrap(), None);

        let zero = NetworkGraph::new(
            vec![NodeSpec::client("c", "k"), NodeSpec::client("d", "k")],
            vec![LinkSpec::new("c", "d", f64::MAX, 0.0, Medium::Copper)],
        );
        assert_eq!(edge_weight(&NetworkView::baseline(&zero, 0), &zero.links()[0], "d", &q("c", "d")).unwrap(), Some(0));
    }

    #[test]
    fn single_link() {
        let g = NetworkGraph::new(
            vec![NodeSpec::client("a", "k"), NodeSpec::client("b", "k")],
            vec![LinkSpec::new("a", "b", 1e6, 1e3, Medium::Copper)],
        );
        let v = NetworkView::baseline(&g, 0);
        let query = RouteQuery::new("a", "b", SimTime::ZERO, 1000.0, 0);
        let r = shortest_path(&v, &query).unwrap();
        assert_eq!(r.hops, ids(&["a", "b"]));
        assert_eq!(r.breakdown, total_path_delay(&v, &r.hops, 1000.0, query.flag_query()).unwrap());
    }

    #[test]
    fn detour_beats_slow_direct_edge() {
        let g = triangle(FailureModel::AlwaysActive);
        let r = shortest_path(&NetworkView::baseline(&g, 0), &q("a", "b")).unwrap();
        assert_eq!(r.hops, ids(&["a", "r", "b"]));
        assert_eq!(r.breakdown.total_ps, 3_000_000_000);
    }

    #[test]
    fn failed_router_forces_direct_edge() {
        let g = triangle(FailureModel::AlwaysFailed);
        let r = shortest_path(&NetworkView::baseline(&g, 0), &q("a", "b")).unwrap();
        assert_eq!(r.hops, ids(&["a", "b"]));
        assert_eq!(r.breakdown.total_ps, 10_000_000_000);
    }

    #[test]
    fn no_route_when_bridge_fails() {
        let g = NetworkGraph::new(
            vec![
                NodeSpec::client("a", "k"),
                NodeSpec::router("r", RouterKind::Regular, 0.0).with_failure(FailureModel::AlwaysFailed),
                NodeSpec::client("b", "k"),
            ],
            vec![LinkSpec::new("a", "r", 1.0, 0.0, Medium::Fiber), LinkSpec::new("r", "b", 1.0, 0.0, Medium::Fiber)],
        );
        let err = shortest_path(&NetworkView::baseline(&g, 0), &q("a", "b")).unwrap_err();
        assert!(matches!(err, RoutingError::NoRoute(_)));
    }

    #[test]
    fn clients_do_not_forward() {
        let g = NetworkGraph::new(
            vec![NodeSpec::client("a", "k"), NodeSpec::client("m", "k"), NodeSpec::client("b", "k")],
            vec![LinkSpec::new("a", "m", 1.0, 0.0, Medium::Fiber), LinkSpec::new("m", "b", 1.0, 0.0, Medium::Fiber)],
        );
        assert!(shortest_path(&NetworkView::baseline(&g, 0), &q("a", "b")).is_err());
    }

    #[test]
    fn ties_prefer_fewer_hops_then_smaller_ids() {
        // Two equal-cost two-hop routes via r2 and r1, and an equal-cost three-hop route.
        let g = NetworkGraph::new(
            vec![
                NodeSpec::client("a", "k"),
                NodeSpec::router("r2", RouterKind::Regular, 0.0),
                NodeSpec::router("r1", RouterKind::Regular, 0.0),
                NodeSpec::router("r0", RouterKind::Regular, 0.0),
                NodeSpec::client("b", "k"),
            ],
            vec![
                LinkSpec::new("a", "r2", 1.0, 2e8, Medium::Fiber),
                LinkSpec::new("r2", "b", 1.0, 2e8, Medium::Fiber),
                LinkSpec::new("a", "r1", 1.0, 2e8, Medium::Fiber),
                LinkSpec::new("r1", "b", 1.0, 2e8, Medium::Fiber),
                LinkSpec::new("a", "r0", 1.0, 2e8, Medium::Fiber),
                LinkSpec::new("r0", "r2", 1.0, 0.0, Medium::Fiber),
            ],
        );
        let r = shortest_path(&NetworkView::baseline(&g, 0), &q("a", "b")).unwrap();
        assert_eq!(r.hops, ids(&["a", "r1", "b"]));
    }

    #[test]
    fn symmetric_round_trip_reverses() {
        let g = triangle(FailureModel::AlwaysActive);
        let v = NetworkView::baseline(&g, 0);
        let (f, b) = round_trip_routes(&v, "a", "b", SimTime::ZERO, SimTime::from_secs(1.0), (100.0, 100.0), (1, 2)).unwrap();
        let mut rev = b.hops.clone();
        rev.reverse();
        assert_eq!(f.hops, rev);
    }

    #[test]
    fn reply_avoids_router_that_failed() {
        // r is up for the first 5 ms of every second.
        let g = triangle(FailureModel::Alternating { up_s: 5e-3, down_s: 0.995 });
        let v = NetworkView::baseline(&g, 0);
        let (f, b) = round_trip_routes(&v, "a", "b", SimTime::ZERO, SimTime::from_secs(0.01), (0.0, 0.0), (1, 2)).unwrap();
        assert_eq!(f.hops, ids(&["a", "r", "b"]));
        assert_eq!(b.hops, ids(&["b", "a"]));
    }

    #[test]
    fn both_legs_blocked() {
        let g = NetworkGraph::new(
            vec![
                NodeSpec::client("a", "k"),
                NodeSpec::router("r", RouterKind::Regular, 0.0).with_failure(FailureModel::AlwaysFailed),
                NodeSpec::client("b", "k"),
            ],
            vec![LinkSpec::new("a", "r", 1.0, 0.0, Medium::Fiber), LinkSpec::new("r", "b", 1.0, 0.0, Medium::Fiber)],
        );
        let err = round_trip_routes(&NetworkView::baseline(&g, 0), "a", "b", SimTime::ZERO, SimTime::ZERO, (0.0, 0.0), (1, 2))
            .unwrap_err();
        assert!(err.forward.is_some() && err.backward.is_some());
    }
}
