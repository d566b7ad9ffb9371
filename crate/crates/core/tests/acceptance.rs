//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use clocksim::attacks::{AttackKind, AttackSpec};
use clocksim::clock::{extremum_analysis, ClockParameters, CorrectionPolicy, Extremum, SoftwareClock};
use clocksim::delay::{hop_offsets, total_path_delay};
use clocksim::gnss::{sample_gnss_jitter, GnssPreset};
use clocksim::routing::{shortest_path, RouteQuery, RoutingError};
use clocksim::scenario::load_scenario;
use clocksim::sync::{berkeley_round, cristian_sync};
use clocksim::topology::{FlagQuery, LinkSpec, Medium, NetworkGraph, NodeSpec, RouterKind};
use clocksim::{NetworkView, SimTime};
use common::{graphs, ids, MS, NS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quartz_like() -> ClockParameters<f64> {
    ClockParameters::quadratic(0.0, 10e-6, -1e-10)
}

fn extremum_reproduction() {
    let p = quartz_like();
    let r = extremum_analysis(&p);
    assert!(r.has_extremum);
    assert_eq!(r.t_star, Some(5e4));
    assert_eq!(r.classification, Extremum::LocalMaximum);
    let c = SoftwareClock::new("c", p, 0);
    let peak = c.offset(5e4);
    assert!((peak - 0.25).abs() <= 1e-12, "alpha(t*) = {peak}");
    assert!(c.offset(5e4 - 100.0) < peak && c.offset(5e4 + 100.0) < peak);

    let out = Command::new(env!("CARGO_BIN_EXE_clocksim"))
        .args(["analyze-clock", "--beta", "10e-6", "--gamma", "-1e-10"])
        .output()
        .expect("cli runs");
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["t_star"].as_f64(), Some(5e4));
    assert_eq!(v["classification"], "local_maximum");
    assert!((v["offset_at_t_star"].as_f64().unwrap() - 0.25).abs() <= 1e-12);
}

fn quadratic_flaw() {
    let c = SoftwareClock::new("c", quartz_like(), 0);
    let a = c.offset(1e5);
    assert!(a.abs() <= 1e-12, "alpha(1e5) = {a}");
}

fn delay_additivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let media = [Medium::Fiber, Medium::Copper, Medium::Wireless, Medium::Satellite];
    for _ in 0..1000 {
        let hops = rng.random_range(1..=8);
        let mut nodes = vec![NodeSpec::client("n0", "k")];
        let mut links = Vec::new();
        for i in 1..=hops {
            let id = format!("n{i}");
            nodes.push(if i == hops {
                NodeSpec::time_server(&id, "k")
            } else {
                NodeSpec::router(&id, RouterKind::Regular, rng.random_range(0.0..1e-3))
            });
            links.push(LinkSpec::new(
                format!("n{}", i - 1),
                &id,
                rng.random_range(1e3..1e11),
                rng.random_range(0.0..4e7),
                media[rng.random_range(0..4)],
            ));
        }
        let g = NetworkGraph::new(nodes, links);
        let path: Vec<String> = (0..=hops).map(|i| format!("n{i}")).collect();
        let size = rng.random_range(0.0..1e7);
        let b = total_path_delay(&NetworkView::baseline(&g, 0), &path, size, FlagQuery::new(SimTime::ZERO, 0)).unwrap();
        assert_eq!(b.total_ps, b.router_ps + b.transmission_ps + b.propagation_ps);
        assert_eq!(b.total_ps, b.per_hop.iter().map(|h| h.ps).sum::<i64>());
        assert_eq!(*hop_offsets(&path, &b).last().unwrap(), b.total_ps);
    }

    let g = NetworkGraph::new(
        vec![
            NodeSpec::client("client", "k"),
            NodeSpec::router("router", RouterKind::Regular, 50e-6),
            NodeSpec::time_server("server", "k"),
        ],
        vec![
            LinkSpec::new("client", "router", 1e9, 1e5, Medium::Fiber),
            LinkSpec::new("router", "server", 1e9, 1e5, Medium::Fiber),
        ],
    );
    let b = total_path_delay(&NetworkView::baseline(&g, 0), &ids(&["client", "router", "server"]), 12000.0, FlagQuery::new(SimTime::ZERO, 0))
        .unwrap();
    assert_eq!(b.total_ps, 1_074 * 1_000_000);
}

fn routing_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut routed, mut multi_router) = (0, 0);
    for case in 0..200 {
        let g = graphs::random_graph(&mut rng);
        assert!(g.validate().is_empty(), "{:?}", g.validate());
        let seed = rng.random();
        let t = SimTime::from_ps(rng.random_range(0..200_000_000_000));
        let q = RouteQuery::new("e0", "e1", t, rng.random_range(0.0..1e5), rng.random());
        let expected = graphs::brute_force(&g, "e0", "e1", q.message_size_bits, q.flag_query(), seed);
        let got = shortest_path(&NetworkView::baseline(&g, seed), &q);
        match (expected, got) {
            (Some(cost), Ok(route)) => {
                assert_eq!(route.breakdown.total_ps, cost, "case {case}");
                routed += 1;
                multi_router += usize::from(route.hops.len() >= 4);
            }
            (None, Err(RoutingError::NoRoute(_))) => {}
            (e, g) => panic!("case {case}: oracle {e:?}, dijkstra {g:?}"),
        }
    }
    assert!(routed > 100, "only {routed} routable cases");
    assert!(multi_router > 30, "only {multi_router} routes cross two or more routers");
}

fn cristian_residual_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..100 {
        let f = rng.random_range(1_000..50_000_000) * NS;
        let b = if i % 10 == 0 { f } else { rng.random_range(1_000..50_000_000) * NS };
        let (mut e, t0) = common::asymmetric_pair(f / NS, b / NS, rng.random_range(-0.05..0.05));
        e.run_until(t0).unwrap();
        let r = cristian_sync(&mut e, "c", "s", CorrectionPolicy::Step).unwrap();
        let x = &r.exchanges[0];
        assert_eq!((x.forward_delay_ps, x.backward_delay_ps), (f, b), "pair {i}");
        assert_eq!(r.signed_residuals_ps["c"], (f - b) / 2, "pair {i}");
        assert_eq!(r.residuals_ps["c"], (b - f).abs() / 2, "pair {i}");
        if f == b {
            assert_eq!(r.residuals_ps["c"], 0);
        }
    }
}

fn berkeley_convergence() {
    let clocks = [
        ("coord", ClockParameters::linear(0.0, 0.0)),
        ("a", ClockParameters::linear(0.010, 0.0)),
        ("b", ClockParameters::linear(-0.004, 0.0)),
    ];
    let mut e = common::star_engine(&clocks, 3e-4, Vec::new());
    let r = berkeley_round(&mut e, "coord", &["a", "b"], None, CorrectionPolicy::Step).unwrap();
    for (node, want) in [("a", -8 * MS), ("b", 6 * MS), ("coord", 2 * MS)] {
        let got = r.corrections_ps[node];
        assert!((got - want).abs() <= NS, "{node}: {got}");
    }
    let r2 = berkeley_round(&mut e, "coord", &["a", "b"], None, CorrectionPolicy::Step).unwrap();
    for node in ["a", "b", "coord"] {
        assert!(r2.corrections_ps[node].abs() <= NS, "{node}: {}", r2.corrections_ps[node]);
    }
}

fn attack_superposition() {
    let clocks = [("client", ClockParameters::linear(0.003, 0.0)), ("server", ClockParameters::perfect())];
    let spoof = |start, end| AttackSpec::new(AttackKind::IpSpoof { forged_offset_s: 1.0 }, "client", start, end);
    let run = |attacks: Vec<AttackSpec>| {
        let mut e = common::star_engine(&clocks, 2e-4, attacks);
        e.run_until(SimTime::from_secs(0.1)).unwrap();
        let r = cristian_sync(&mut e, "client", "server", CorrectionPolicy::Step).unwrap();
        e.run_until(SimTime::from_secs(2.0)).unwrap();
        (r, e.trace_jsonl())
    };
    let (attacked, _) = run(vec![spoof(0.0, 1.0)]);
    assert!((attacked.residuals_ps["client"] - 1_000 * MS).abs() <= NS, "{:?}", attacked.residuals_ps);
    let (baseline, base_trace) = run(Vec::new());
    assert_eq!(baseline.residuals_ps["client"], 0);
    let (_, moved_trace) = run(vec![spoof(50.0, 60.0)]);
    assert_eq!(moved_trace.as_bytes(), base_trace.as_bytes());
}

fn gnss_presets() {
    for preset in GnssPreset::ALL {
        let b = preset.jitter_bound();
        for k in 0..1_000_000u64 {
            let v = sample_gnss_jitter(preset, 99, "server", k);
            assert!(v >= b.lo_ns && v < b.hi_ns, "{preset:?} draw {k} = {v}");
        }
    }
}

fn determinism() {
    let scenarios = common::bundled_scenarios();
    assert!(scenarios.len() >= 3);
    let mut changed = 0;
    for path in &scenarios {
        let a = common::run_digest(path, None);
        assert_eq!(a, common::run_digest(path, None), "{}", path.display());
        let s = load_scenario(path).unwrap();
        let mut reseeded = s.clone();
        reseeded.config.seed ^= 0x5eed;
        assert_eq!(s.validate(), reseeded.validate());
        if common::run_digest(path, Some(reseeded.config.seed)) != a {
            changed += 1;
        }
    }
    // every bundled scenario except the noiseless spoof demo draws random numbers
    assert!(changed >= scenarios.len() - 1, "seed changed only {changed} traces");
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(), Duration); 9] = [
        ("1 extremum reproduction", extremum_reproduction, Duration::from_secs(1)),
        ("2 quadratic-model flaw", quadratic_flaw, Duration::from_secs(1)),
        ("3 delay additivity", delay_additivity, Duration::from_secs(10)),
        ("4 routing oracle", routing_oracle, Duration::from_secs(60)),
        ("5 cristian residual law", cristian_residual_law, Duration::from_secs(30)),
        ("6 berkeley convergence", berkeley_convergence, Duration::from_secs(10)),
        ("7 attack superposition", attack_superposition, Duration::from_secs(10)),
        ("8 gnss presets", gnss_presets, Duration::from_secs(30)),
        ("9 determinism", determinism, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let took = start.elapsed();
        let verdict = match outcome {
            Ok(()) if took <= budget => "PASS".to_string(),
            Ok(()) => format!("FAIL (took {took:.2?}, budget {budget:?})"),
            Err(_) => "FAIL".to_string(),
        };
        if verdict != "PASS" {
            failed += 1;
        }
        println!("criterion {name}: {verdict} [{took:.2?}]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
