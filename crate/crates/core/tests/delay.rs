use clocksim::delay::{propagation_delay_ps, total_path_delay, transmission_delay_ps, PathDelayBreakdown};
use clocksim::topology::{FlagQuery, LinkSpec, Medium, NetworkGraph, NodeSpec, RouterKind};
use clocksim::{NetworkView, SimTime};
use proptest::prelude::*;

const MEDIA: [Medium; 4] = [Medium::Fiber, Medium::Copper, Medium::Wireless, Medium::Satellite];

#[derive(Clone, Debug)]
struct Hop {
    bandwidth: f64,
    distance: f64,
    medium: usize,
    router_delay: f64,
}

fn hop() -> impl Strategy<Value = Hop> {
    (1e3..1e11f64, 0.0..5e7f64, 0..4usize, 0.0..1e-2f64).prop_map(|(bandwidth, distance, medium, router_delay)| Hop {
        bandwidth,
        distance,
        medium,
        router_delay,
    })
}

fn chain(hops: &[Hop]) -> (NetworkGraph, Vec<String>) {
    let n = hops.len();
    let mut nodes = vec![NodeSpec::client("n0", "k")];
    let mut links = Vec::new();
    for (i, h) in hops.iter().enumerate() {
        let id = format!("n{}", i + 1);
        nodes.push(if i + 1 == n { NodeSpec::time_server(&id, "k") } else { NodeSpec::router(&id, RouterKind::Regular, h.router_delay) });
        links.push(LinkSpec::new(format!("n{i}"), &id, h.bandwidth, h.distance, MEDIA[h.medium]));
    }
    (NetworkGraph::new(nodes, links), (0..=n).map(|i| format!("n{i}")).collect())
}

fn breakdown(hops: &[Hop], size: f64) -> PathDelayBreakdown {
    let (g, path) = chain(hops);
    total_path_delay(&NetworkView::baseline(&g, 0), &path, size, FlagQuery::new(SimTime::ZERO, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn total_is_exact_sum(hops in prop::collection::vec(hop(), 1..8), size in 0.0..1e8f64) {
        let b = breakdown(&hops, size);
        prop_assert_eq!(b.total_ps, b.router_ps + b.transmission_ps + b.propagation_ps);
        prop_assert_eq!(b.total_ps, b.per_hop.iter().map(|h| h.ps).sum::<i64>());
        // independent per-hop recomputation
        let mut expect = 0i64;
        for (i, h) in hops.iter().enumerate() {
            expect += (size * 1e12 / h.bandwidth).round_ties_even() as i64;
            expect += (h.distance * 1e12 / NetworkGraph::new(vec![], vec![]).speeds().speed(MEDIA[h.medium])).round_ties_even() as i64;
            if i + 1 < hops.len() {
                expect += (h.router_delay * 1e12).round_ties_even() as i64;
            }
        }
        prop_assert_eq!(b.total_ps, expect);
    }

    #[test]
    fn splitting_a_path_adds_up(hops in prop::collection::vec(hop(), 2..8), size in 0.0..1e8f64, cut in 1usize..7) {
        let cut = cut.min(hops.len() - 1);
        let whole = breakdown(&hops, size);
        let (g, path) = chain(&hops);
        let v = NetworkView::baseline(&g, 0);
        let q = FlagQuery::new(SimTime::ZERO, 0);
        let left = total_path_delay(&v, &path[..=cut], size, q).unwrap();
        let right = total_path_delay(&v, &path[cut..], size, q).unwrap();
        prop_assert_eq!(whole.total_ps, left.total_ps + right.total_ps);
    }

    #[test]
    fn monotone_in_size_and_distance(h in hop(), size in 0.0..1e8f64, extra in 0.0..1e8f64) {
        let tx = transmission_delay_ps(size, h.bandwidth).unwrap();
        prop_assert!(transmission_delay_ps(size + extra, h.bandwidth).unwrap() >= tx);
        let speed = 2e8;
        let p = propagation_delay_ps(h.distance, speed).unwrap();
        prop_assert!(propagation_delay_ps(h.distance + extra, speed).unwrap() >= p);
        prop_assert!(transmission_delay_ps(size, h.bandwidth * 2.0).unwrap() <= tx);
    }

    #[test]
    fn router_delay_only_adds(hops in prop::collection::vec(hop(), 2..8), size in 0.0..1e6f64, bump in 0.0..1e-3f64) {
        let base = breakdown(&hops, size);
        let mut slower = hops.clone();
        slower[0].router_delay += bump;
        let b = breakdown(&slower, size);
        prop_assert!(b.total_ps >= base.total_ps);
        prop_assert_eq!(b.transmission_ps + b.propagation_ps, base.transmission_ps + base.propagation_ps);
    }
}
