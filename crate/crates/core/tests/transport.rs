mod common;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use dbp_core::hydraulics::solve_flows;
use dbp_core::network::Network;
use dbp_core::synth::{case_study_network, dead_end_network};
use dbp_core::transport::{decay_concentration, propagate, DecayParams, HORIZON_MINUTES};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_decay_matches_rk4(
        c0 in 0.2f64..4.0,
        kb in 0.01f64..1.0,
        frac in 0.0f64..1.0,
        order in prop::sample::select(vec![0.5, 1.0, 1.5, 2.0]),
    ) {
        let hours = frac * common::decay_horizon(c0, kb, order);
        let exact = decay_concentration(DecayParams { c0, kb, order }, hours);
        let oracle = common::rk4_decay(c0, kb, order, hours, 20_000);
        let tol = 1e-6 * oracle.abs().max(1e-3);
        prop_assert!((exact - oracle).abs() <= tol, "{exact} vs {oracle}");
    }

    #[test]
    fn decay_is_monotone_in_time(c0 in 0.1f64..4.0, kb in 0.0f64..2.0, t in 0.0f64..50.0, dt in 0.0f64..50.0) {
        for order in [0.5, 1.0, 2.0] {
            let p = DecayParams { c0, kb, order };
            prop_assert!(decay_concentration(p, t + dt) <= decay_concentration(p, t) + 1e-15);
        }
    }
}

/// Earliest arrival by Dijkstra over flow-directed pipes.
fn dijkstra_minutes(net: &Network, flows: &[f64], source: usize) -> Vec<f64> {
    let n = net.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for (p, &q) in net.pipes.iter().zip(flows) {
        if q.abs() <= 1e-9 {
            continue;
        }
        let (a, b) = (net.node_index(&p.from).unwrap(), net.node_index(&p.to).unwrap());
        let (u, v) = if q > 0.0 { (a, b) } else { (b, a) };
        let area = std::f64::consts::PI * (p.diameter / 1000.0).powi(2) / 4.0;
        let velocity = q.abs() / 1000.0 / area;
        adj[u].push((v, p.length / velocity / 60.0));
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([Reverse((0u64, source))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        let d = f64::from_bits(d);
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            if d + w < dist[v] {
                dist[v] = d + w;
                heap.push(Reverse(((d + w).to_bits(), v)));
            }
        }
    }
    dist
}

#[test]
fn arrivals_match_shortest_travel_time() {
    for net in [case_study_network(), dead_end_network(120, 10, 5)] {
        let flows = solve_flows(&net, 1e-10).unwrap();
        let src = net.node_index("T1").unwrap();
        let p = DecayParams { c0: 1.5, kb: 0.02, order: 1.0 };
        let r = propagate(&net, &flows, &BTreeSet::from(["T1".to_string()]), p, 0.01).unwrap();
        let oracle = dijkstra_minutes(&net, &flows.pipe_flows, src);
        for (i, node) in net.nodes.iter().enumerate() {
            let want = if oracle[i] > HORIZON_MINUTES { f64::INFINITY } else { oracle[i] };
            let got = r.arrival_time[i];
            if want.is_finite() {
                assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{}: {got} vs {want}", node.id);
            } else {
                assert!(got.is_infinite(), "{}: {got}", node.id);
            }
        }
    }
}

#[test]
fn tree_chlorine_follows_first_order_decay() {
    let net = case_study_network();
    let flows = solve_flows(&net, 1e-10).unwrap();
    let p = DecayParams { c0: 2.0, kb: 0.05, order: 1.0 };
    let r = propagate(&net, &flows, &BTreeSet::from(["T1".to_string()]), p, 1e-6).unwrap();
    let src = net.node_index("T1").unwrap();
    let minutes = dijkstra_minutes(&net, &flows.pipe_flows, src);
    for (i, node) in net.nodes.iter().enumerate() {
        if node.id.starts_with('J') {
            let want = 2.0 * (-0.05 * minutes[i] / 60.0).exp();
            assert!((r.chlorine[i] - want).abs() <= 1e-9, "{}", node.id);
        }
    }
}
