#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use clocksim::clock::ClockParameters;
use clocksim::engine::{Engine, EngineConfig};
use clocksim::scenario::load_scenario;
use clocksim::topology::{FailureModel, LinkSpec, Medium, NetworkGraph, NodeSpec, RouterKind};
use clocksim::{AttackSpec, SimTime};

pub const NS: i64 = 1_000;
pub const MS: i64 = 1_000_000_000;

pub fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn bundled_scenarios() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

/// Trace digest of a bundled scenario run to its configured duration.
pub fn run_digest(path: &std::path::Path, seed: Option<u64>) -> String {
    let s = load_scenario(path).expect("bundled scenario loads");
    let mut e = s.build_engine(seed).expect("engine builds");
    e.run_until(SimTime::from_secs(s.config.duration_s)).expect("runs");
    e.trace_digest()
}

fn zero_link(a: &str, b: &str) -> LinkSpec {
    LinkSpec::new(a, b, 1e9, 0.0, Medium::Fiber)
}

/// Client `c` and server `s` joined through one regular router `r` with
/// router delay `d_s`; links are zero-length and messages carry zero bits, so
/// both legs take exactly `d_s`.
pub fn star_engine(clocks: &[(&str, ClockParameters<f64>)], d_s: f64, attacks: Vec<AttackSpec>) -> Engine {
    let mut nodes = vec![NodeSpec::router("r", RouterKind::Regular, d_s)];
    let mut links = Vec::new();
    let mut params = BTreeMap::new();
    for (id, p) in clocks {
        nodes.push(NodeSpec::client(*id, *id));
        links.push(zero_link(id, "r"));
        params.insert(id.to_string(), p.clone());
    }
    let config = EngineConfig { sync_message_bits: 0.0, ..EngineConfig::default() };
    Engine::new(NetworkGraph::new(nodes, links), params, attacks, config)
}

/// Cristian pair whose request crosses router `a` (delay `f_ns`) and whose
/// reply crosses router `b` (delay `b_ns`). Alternating failure windows make
/// exactly one of the two routers usable at each send instant, for a sync
/// started at the returned time `x`.
pub fn asymmetric_pair(f_ns: i64, b_ns: i64, client_offset_s: f64) -> (Engine, SimTime) {
    let x = 0.1;
    let half_f = f_ns as f64 * 1e-9 / 2.0;
    assert!(x > half_f);
    let nodes = vec![
        NodeSpec::client("c", "c"),
        NodeSpec::time_server("s", "s"),
        NodeSpec::router("a", RouterKind::Regular, f_ns as f64 * 1e-9)
            .with_failure(FailureModel::Alternating { up_s: x + half_f, down_s: 1e3 }),
        NodeSpec::router("b", RouterKind::Regular, b_ns as f64 * 1e-9)
            .with_failure(FailureModel::Alternating { up_s: x, down_s: half_f }),
    ];
    let links = vec![zero_link("c", "a"), zero_link("a", "s"), zero_link("c", "b"), zero_link("b", "s")];
    let mut params = BTreeMap::new();
    params.insert("c".to_string(), ClockParameters::linear(client_offset_s, 0.0));
    params.insert("s".to_string(), ClockParameters::perfect());
    let config = EngineConfig { sync_message_bits: 0.0, ..EngineConfig::default() };
    (Engine::new(NetworkGraph::new(nodes, links), params, Vec::new(), config), SimTime::from_secs(x))
}

pub mod graphs {
    use std::collections::BTreeSet;

    use clocksim::topology::{FailureModel, FlagQuery, LinkSpec, Medium, NetworkGraph, NodeKind, NodeSpec, RouterKind};
    use rand::Rng;

    const MEDIA: [Medium; 4] = [Medium::Fiber, Medium::Copper, Medium::Wireless, Medium::Satellite];

    /// Connected graph with `e0`, `e1` endpoints and up to 8 routers, at most
    /// 20 links, random media, router delays and failure models.
    pub fn random_graph(rng: &mut impl Rng) -> NetworkGraph {
        let n_routers = rng.random_range(1..=8);
        let mut names = vec!["e0".to_string(), "e1".to_string()];
        let mut nodes = vec![NodeSpec::client("e0", "k"), NodeSpec::time_server("e1", "k")];
        for i in 0..n_routers {
            let id = format!("r{i}");
            let kind = if rng.random_bool(0.3) { RouterKind::Wifi } else { RouterKind::Regular };
            let mut node = NodeSpec::router(&id, kind, rng.random_range(0..2000) as f64 * 1e-7);
            node = node.with_failure(match rng.random_range(0..5) {
                0 => FailureModel::AlwaysFailed,
                1 => FailureModel::Bernoulli { failure_probability: rng.random_range(0.0..1.0) },
                2 => FailureModel::Alternating { up_s: rng.random_range(1..100) as f64 * 1e-3, down_s: rng.random_range(1..100) as f64 * 1e-3 },
                _ => FailureModel::AlwaysActive,
            });
            nodes.push(node);
            names.push(id);
        }
        let mut pairs = BTreeSet::new();
        let mut links = Vec::new();
        let mut add = |a: &str, b: &str, rng: &mut dyn rand::RngCore, links: &mut Vec<LinkSpec>| {
            let key = if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
            if a == b || !pairs.insert(key) {
                return;
            }
            let bw = [1e6, 1e8, 1e9, 3.3e8, 1e10][rng.random_range(0..5)];
            let dist = rng.random_range(0..2_000_000) as f64;
            links.push(LinkSpec::new(a, b, bw, dist, MEDIA[rng.random_range(0..4)]));
        };
        // random spanning tree over the routers, endpoints hung off it
        let routers = &names[2..];
        for i in 1..routers.len() {
            let j = rng.random_range(0..i);
            add(&routers[i], &routers[j], rng, &mut links);
        }
        for e in &names[..2] {
            let r = &routers[rng.random_range(0..routers.len())];
            add(e, r, rng, &mut links);
        }
        let extra = rng.random_range(0..=20 - links.len());
        for _ in 0..extra {
            let a = names[rng.random_range(0..names.len())].clone();
            let b = names[rng.random_range(0..names.len())].clone();
            add(&a, &b, rng, &mut links);
        }
        NetworkGraph::new(nodes, links)
    }

    fn ps(x: f64) -> i64 {
        (x * 1e12).round_ties_even() as i64
    }

    /// Cost of entering `to` over `link` from the other end, or `None` when `to`
    /// is an inactive router.
    fn hop_cost(g: &NetworkGraph, link: &LinkSpec, to: &str, size_bits: f64, q: FlagQuery, seed: u64) -> Option<i64> {
        let node = g.node(to).unwrap();
        let router = if node.kind == NodeKind::Router {
            if !g.router_flag(to, q, seed).unwrap() {
                return None;
            }
            let default = match node.router_kind.unwrap_or_default() {
                RouterKind::Wifi => 500e-6,
                RouterKind::Regular => 50e-6,
            };
            ps(node.router_delay_s.unwrap_or(default))
        } else {
            0
        };
        Some(ps(size_bits / link.bandwidth_bps) + ps(link.distance_m / g.speeds().speed(link.medium)) + router)
    }

    /// Least total delay over every simple path whose interior nodes are routers.
    pub fn brute_force(g: &NetworkGraph, src: &str, dst: &str, size_bits: f64, q: FlagQuery, seed: u64) -> Option<i64> {
        fn walk(
            g: &NetworkGraph,
            at: &str,
            dst: &str,
            size: f64,
            q: FlagQuery,
            seed: u64,
            seen: &mut Vec<String>,
            cost: i64,
            best: &mut Option<i64>,
        ) {
            if at == dst {
                *best = Some(best.map_or(cost, |b| b.min(cost)));
                return;
            }
            if seen.len() > 1 && g.node(at).unwrap().kind != NodeKind::Router {
                return;
            }
            for l in g.links().iter().filter(|l| l.a == at || l.b == at) {
                let next = if l.a == at { &l.b } else { &l.a };
                if seen.iter().any(|s| s == next) {
                    continue;
                }
                if let Some(c) = hop_cost(g, l, next, size, q, seed) {
                    seen.push(next.clone());
                    walk(g, next, dst, size, q, seed, seen, cost + c, best);
                    seen.pop();
                }
            }
        }
        let mut best = None;
        walk(g, src, dst, size_bits, q, seed, &mut vec![src.to_string()], 0, &mut best);
        best
    }
}
