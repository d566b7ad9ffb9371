//! Graphviz export of a topology snapshot.

use std::fmt::Write;

use crate::attacks::{AttackKind, HijackMode, NetworkView};
use crate::clock::SoftwareClock;
use crate::scenario::Scenario;
use crate::topology::{FlagQuery, NodeKind};
use crate::units::SimTime;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT text for `scenario` at simulated time `t`: node labels carry kind and
/// free-running clock offset, edges carry bandwidth, distance and medium.
/// Routers that are down are drawn dashed red; hijacked ones get a bold outline.
pub fn export_graph(scenario: &Scenario, t: SimTime) -> String {
    let seed = scenario.config.seed;
    let view = NetworkView::new(&scenario.graph, seed, &scenario.attacks);
    let clocks = scenario.node_clocks();
    let mut out = String::from("digraph network {\n");
    let _ = writeln!(out, "  label={};", quote(&format!("t = {} s", t.as_secs())));
    for n in scenario.graph.nodes() {
        let kind = match n.kind {
            NodeKind::Client => "client",
            NodeKind::TimeServer => "time_server",
            NodeKind::Router => "router",
        };
        let mut label = format!("{}\\n{kind}", n.id);
        if let Some(p) = clocks.get(&n.id) {
            let c = SoftwareClock::new(n.id.clone(), p.clone(), seed);
            let _ = write!(label, "\\noffset {:.9} s", c.offset_ps(t) as f64 * 1e-12);
        }
        let mut attrs = vec![format!("label=\"{label}\"")];
        attrs.push(format!("shape={}", if n.kind == NodeKind::Router { "box" } else { "ellipse" }));
        if n.is_router() {
            // epoch 0: the flag a fresh message would see
            let active = view.router_state(&n.id, FlagQuery::new(t, 0)).map(|s| s.active).unwrap_or(false);
            if !active {
                attrs.push("style=dashed".into());
                attrs.push("color=red".into());
            }
            let hijacked = view
                .active_attacks(t)
                .any(|(_, a)| a.target == n.id && matches!(a.kind, AttackKind::RouterHijack { .. }));
            if hijacked {
                attrs.push("penwidth=3".into());
                if view.active_attacks(t).any(|(_, a)| {
                    a.target == n.id && matches!(a.kind, AttackKind::RouterHijack { mode: HijackMode::ForceDown, .. })
                }) {
                    attrs.push("fontcolor=red".into());
                }
            }
        }
        let _ = writeln!(out, "  {} [{}];", quote(&n.id), attrs.join(", "));
    }
    for l in scenario.graph.links() {
        let _ = writeln!(
            out,
            "  {} -> {} [dir=none, label=\"{} bps\\n{} m\\n{}\"];",
            quote(&l.a),
            quote(&l.b),
            l.bandwidth_bps,
            l.distance_m,
            l.medium.name()
        );
    }
    out.push_str("}\n");
    out
}
