mod common;

use dbp_core::hydraulics::solve_flows;
use dbp_core::network::{parse_inp, Network, NodeKind};
use dbp_core::synth::{case_study_network, dead_end_network, demo_network, large_network};

fn max_relative(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

/// Junction mass balance recomputed from the pipe flows, relative to total demand.
fn mass_imbalance(net: &Network, flows: &[f64]) -> f64 {
    let mut balance: Vec<f64> = net.nodes.iter().map(|n| -n.base_demand).collect();
    for (p, q) in net.pipes.iter().zip(flows) {
        balance[net.node_index(&p.from).unwrap()] -= q;
        balance[net.node_index(&p.to).unwrap()] += q;
    }
    let demand: f64 = net.nodes.iter().filter(|n| n.kind == NodeKind::Junction).map(|n| n.base_demand).sum();
    net.nodes
        .iter()
        .zip(&balance)
        .filter(|(n, _)| n.kind == NodeKind::Junction)
        .map(|(_, b)| b.abs() / demand)
        .fold(0.0, f64::max)
}

#[test]
fn one_loop_matches_hardy_cross() {
    let net = parse_inp(common::ONE_LOOP_INP).unwrap();
    let solved = solve_flows(&net, 1e-10).unwrap();
    let oracle = common::hardy_cross(&net, 500);
    assert!(max_relative(&solved.pipe_flows, &oracle) <= 1e-4, "{:?} vs {oracle:?}", solved.pipe_flows);
}

#[test]
fn demo_matches_hardy_cross() {
    let net = demo_network();
    let solved = solve_flows(&net, 1e-10).unwrap();
    let oracle = common::hardy_cross(&net, 500);
    assert!(max_relative(&solved.pipe_flows, &oracle) <= 1e-4);
}

#[test]
fn bundled_networks_balance_mass() {
    for net in [demo_network(), case_study_network(), large_network(), dead_end_network(80, 12, 3)] {
        let solved = solve_flows(&net, 1e-10).unwrap();
        let imbalance = mass_imbalance(&net, &solved.pipe_flows);
        assert!(imbalance <= 1e-8, "{}: {imbalance}", net.title.join(" "));
    }
}

#[test]
fn heads_fall_along_flow() {
    let net = case_study_network();
    let solved = solve_flows(&net, 1e-10).unwrap();
    for (p, q) in net.pipes.iter().zip(&solved.pipe_flows) {
        let (a, b) = (net.node_index(&p.from).unwrap(), net.node_index(&p.to).unwrap());
        let drop = solved.node_heads[a] - solved.node_heads[b];
        assert!(drop * q >= -1e-9, "{} carries {q} against {drop}", p.id);
    }
}
