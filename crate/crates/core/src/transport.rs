//! Steady-state chlorine transport: travel times along the flow-directed
//! graph, bulk decay, and flow-weighted mixing at junctions.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::FlowSolution;
use crate::network::Network;

/// Arrival times beyond this horizon (72 h) are reported as undetectable.
pub const HORIZON_MINUTES: f64 = 4320.0;
pub const DEFAULT_DETECTION_LIMIT: f64 = 0.01;
/// Pipes carrying less than this (L/s) are treated as stagnant.
pub const ZERO_FLOW_LPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("flow directions form a cycle: {}", cycle.join(" -> "))]
    CyclicFlowGraph { cycle: Vec<String> },
    #[error("unknown injection node {0}")]
    UnknownNode(String),
    #[error("requested {count} injection nodes but the network has {nodes}")]
    CountExceedsNodes { count: usize, nodes: usize },
}

/// Bulk decay parameters: dC/dt = −K_b · Cⁿ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// mg/L
    pub c0: f64,
    /// 1/hour
    pub kb: f64,
    pub order: f64,
}

/// Concentration after `hours` of bulk decay from `p.c0`.
pub fn decay_concentration(p: DecayParams, hours: f64) -> f64 {
    debug_assert!(hours >= 0.0);
    if p.c0 <= 0.0 {
        return 0.0;
    }
    if p.kb == 0.0 || hours == 0.0 {
        return p.c0;
    }
    let m = p.order - 1.0;
    if m.abs() < 1e-12 {
        return p.c0 * (-p.kb * hours).exp();
    }
    // C^(1-n) = C0^(1-n) · (1 + x) with x = (n-1)·K_b·t·C0^(n-1)
    let x = m * p.kb * hours * p.c0.powf(m);
    if x <= -1.0 {
        return 0.0;
    }
    (p.c0.ln() - x.ln_1p() / m).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    /// Minutes since injection, aligned with `Network::nodes`;
    /// `f64::INFINITY` when undetectable.
    #[serde(with = "infinite_as_null")]
    pub arrival_time: Vec<f64>,
    /// Steady-state chlorine, mg/L.
    pub chlorine: Vec<f64>,
    pub injection_nodes: BTreeSet<String>,
    pub detection_limit: f64,
}

impl TransportResult {
    pub fn arrival(&self, net: &Network, id: &str) -> Option<f64> {
        net.node_index(id).map(|i| self.arrival_time[i])
    }

    pub fn concentration(&self, net: &Network, id: &str) -> Option<f64> {
        net.node_index(id).map(|i| self.chlorine[i])
    }

    /// Arrival time capped at the horizon, for averaging.
    pub fn capped_arrival(&self, node: usize) -> f64 {
        self.arrival_time[node].min(HORIZON_MINUTES)
    }
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Flow-directed graph of a steady-state solution.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    /// Incoming edges per node: (upstream node, travel minutes, flow L/s).
    pub incoming: Vec<Vec<(usize, f64, f64)>>,
    /// Nodes in topological order.
    pub order: Vec<usize>,
}

impl FlowGraph {
    pub fn build(net: &Network, flows: &FlowSolution) -> Result<Self, TransportError> {
        let n = net.nodes.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (k, p) in net.pipes.iter().enumerate() {
            let q = flows.pipe_flows[k];
            if !p.status.is_open() || q.abs() <= ZERO_FLOW_LPS {
                continue;
            }
            let (a, b) = net.pipe_ends(p);
            let (up, down) = if q > 0.0 { (a, b) } else { (b, a) };
            let d = p.diameter / 1000.0;
            let volume = std::f64::consts::PI * (d / 2.0).powi(2) * p.length;
            let minutes = volume / (q.abs() / 1000.0) / 60.0;
            incoming[down].push((up, minutes, q.abs()));
            outgoing[up].push(down);
        }
        let mut indegree: Vec<usize> = incoming.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = stack.pop() {
            order.push(u);
            for &v in &outgoing[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    stack.push(v);
                }
            }
        }
        if order.len() < n {
            let cycle = find_cycle(&outgoing, &indegree);
            return Err(TransportError::CyclicFlowGraph {
                cycle: cycle.into_iter().map(|i| net.nodes[i].id.clone()).collect(),
            });
        }
        Ok(Self { incoming, order })
    }
}

/// Walks backwards through nodes left with positive in-degree until one repeats.
fn find_cycle(outgoing: &[Vec<usize>], indegree: &[usize]) -> Vec<usize> {
    let n = outgoing.len();
    let mut pred = vec![Vec::new(); n];
    for (u, outs) in outgoing.iter().enumerate() {
        for &v in outs {
            if indegree[u] > 0 && indegree[v] > 0 {
                pred[v].push(u);
            }
        }
    }
    let Some(start) = (0..n).find(|&v| indegree[v] > 0) else {
        return Vec::new();
    };
    let mut pos = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut v = start;
    while pos[v] == usize::MAX {
        pos[v] = path.len();
        path.push(v);
        v = pred[v][0];
    }
    let mut cycle: Vec<usize> = path[pos[v]..].to_vec();
    cycle.reverse();
    cycle.push(cycle[0]);
    cycle
}

pub fn propagate(
    net: &Network,
    flows: &FlowSolution,
    injection: &BTreeSet<String>,
    p: DecayParams,
    detection_limit: f64,
) -> Result<TransportResult, TransportError> {
    let graph = FlowGraph::build(net, flows)?;
    propagate_on(net, &graph, injection, p, detection_limit)
}

/// As [`propagate`], reusing a prebuilt flow graph across scenarios.
pub fn propagate_on(
    net: &Network,
    graph: &FlowGraph,
    injection: &BTreeSet<String>,
    p: DecayParams,
    detection_limit: f64,
) -> Result<TransportResult, TransportError> {
    let n = net.nodes.len();
    let mut injected = vec![false; n];
    for id in injection {
        let i = net.node_index(id).ok_or_else(|| TransportError::UnknownNode(id.clone()))?;
        injected[i] = true;
    }
    let mut arrival = vec![f64::INFINITY; n];
    let mut chlorine = vec![0.0; n];
    for &v in &graph.order {
        if injected[v] {
            arrival[v] = 0.0;
            chlorine[v] = p.c0;
            continue;
        }
        let inc = &graph.incoming[v];
        if inc.is_empty() {
            chlorine[v] = net.nodes[v].initial_quality;
            continue;
        }
        let mut best = f64::INFINITY;
        let (mut mass, mut total) = (0.0, 0.0);
        for &(u, minutes, q) in inc {
            best = best.min(arrival[u] + minutes);
            let decayed = decay_concentration(
                DecayParams { c0: chlorine[u], kb: p.kb, order: p.order },
                minutes / 60.0,
            );
            mass += q * decayed;
            total += q;
        }
        arrival[v] = best;
        chlorine[v] = mass / total;
    }
    for v in 0..n {
        if injected[v] {
            continue;
        }
        if arrival[v] > HORIZON_MINUTES || chlorine[v] < detection_limit {
            arrival[v] = f64::INFINITY;
        }
    }
    Ok(TransportResult {
        arrival_time: arrival,
        chlorine,
        injection_nodes: injection.clone(),
        detection_limit,
    })
}

/// Uniformly samples `count` distinct node ids, deterministically per seed.
pub fn randomize_injection(net: &Network, count: usize, seed: u64) -> Result<BTreeSet<String>, TransportError> {
    let n = net.nodes.len();
    if count == 0 || count > n {
        return Err(TransportError::CountExceedsNodes { count, nodes: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n, count)
        .into_iter()
        .map(|i| net.nodes[i].id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::solve_flows;
    use crate::network::parse_inp;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// Pipe volume π·(0.1)²/4·L with L chosen so 1 L/s gives 600 s.
    fn chain() -> Network {
        let length = 0.6 / (std::f64::consts::PI * 0.01 / 4.0);
        parse_inp(&format!(
            "[JUNCTIONS]\nB 0 0\nC 0 1\n[RESERVOIRS]\nA 50\n[PIPES]\nP1 A B {length} 100 100\nP2 B C {length} 100 100\n"
        ))
        .unwrap()
    }

    #[test]
    fn decay_edge_cases() {
        let p = DecayParams { c0: 1.3, kb: 0.0, order: 1.0 };
        assert_eq!(decay_concentration(p, 17.0), 1.3);
        let p = DecayParams { c0: 2.0, kb: 1.0, order: 1.0 };
        assert!((decay_concentration(p, std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
        let zero_order = DecayParams { c0: 1.0, kb: 0.5, order: 0.0 };
        assert!((decay_concentration(zero_order, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(decay_concentration(zero_order, 3.0), 0.0);
        let p = DecayParams { c0: 0.0, kb: 0.5, order: 2.0 };
        assert_eq!(decay_concentration(p, 3.0), 0.0);
    }

    #[test]
    fn chain_arrival_times() {
        let net = chain();
        let flows = solve_flows(&net, 1e-10).unwrap();
        let p = DecayParams { c0: 1.0, kb: 0.0, order: 1.0 };
        let r = propagate(&net, &flows, &set(&["A"]), p, 0.01).unwrap();
        assert_eq!(r.arrival(&net, "A"), Some(0.0));
        assert!((r.arrival(&net, "B").unwrap() - 10.0).abs() < 1e-9);
        assert!((r.arrival(&net, "C").unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn full_injection_is_degenerate() {
        let net = chain();
        let flows = solve_flows(&net, 1e-10).unwrap();
        let p = DecayParams { c0: 0.8, kb: 2.0, order: 1.0 };
        let r = propagate(&net, &flows, &set(&["A", "B", "C"]), p, 0.01).unwrap();
        assert!(r.arrival_time.iter().all(|&t| t == 0.0));
        assert!(r.chlorine.iter().all(|&c| c == 0.8));
    }

    #[test]
    fn below_detection_limit_is_undetected() {
        let net = chain();
        let flows = solve_flows(&net, 1e-10).unwrap();
        // ten minutes per pipe at 20/h: B keeps 0.036, C drops to 0.0013
        let p = DecayParams { c0: 1.0, kb: 20.0, order: 1.0 };
        let r = propagate(&net, &flows, &set(&["A"]), p, 0.01).unwrap();
        assert!(r.arrival(&net, "B").unwrap().is_finite());
        assert!(r.arrival(&net, "C").unwrap().is_infinite());
    }

    #[test]
    fn y_junction_mixing() {
        // two sources feed M with equal flow; sources carry different initial quality
        let text = "\
[JUNCTIONS]
M 0 2
[RESERVOIRS]
S1 50
S2 50
[PIPES]
P1 S1 M 100 100 100
P2 S2 M 100 100 100
[QUALITY]
S1 0.8
S2 0.4
";
        let net = parse_inp(text).unwrap();
        let flows = solve_flows(&net, 1e-10).unwrap();
        let p = DecayParams { c0: 0.0, kb: 0.0, order: 1.0 };
        let r = propagate(&net, &flows, &BTreeSet::new(), p, 0.01).unwrap();
        assert!((r.concentration(&net, "M").unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_injection_node() {
        let net = chain();
        let flows = solve_flows(&net, 1e-10).unwrap();
        let p = DecayParams { c0: 1.0, kb: 0.0, order: 1.0 };
        assert!(matches!(
            propagate(&net, &flows, &set(&["nope"]), p, 0.01),
            Err(TransportError::UnknownNode(_))
        ));
    }

    #[test]
    fn cyclic_flow_is_reported() {
        let net = parse_inp(
            "[JUNCTIONS]\nA 0 0\nB 0 0\nC 0 0\n[RESERVOIRS]\nR 10\n[PIPES]\nP0 R A 1 100 100\nP1 A B 1 100 100\nP2 B C 1 100 100\nP3 C A 1 100 100\n",
        )
        .unwrap();
        let fake = FlowSolution {
            pipe_flows: vec![0.0, 1.0, 1.0, 1.0],
            node_heads: vec![0.0; 4],
            residual: 0.0,
            energy_residual: 0.0,
            iterations: 0,
        };
        let p = DecayParams { c0: 1.0, kb: 0.0, order: 1.0 };
        match propagate(&net, &fake, &set(&["R"]), p, 0.01) {
            Err(TransportError::CyclicFlowGraph { cycle }) => {
                assert_eq!(cycle.len(), 4);
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn injection_sampling() {
        let net = chain();
        assert_eq!(randomize_injection(&net, 3, 1).unwrap(), set(&["A", "B", "C"]));
        assert_eq!(randomize_injection(&net, 2, 9).unwrap(), randomize_injection(&net, 2, 9).unwrap());
        assert!(matches!(randomize_injection(&net, 4, 1), Err(TransportError::CountExceedsNodes { .. })));
        assert!(matches!(randomize_injection(&net, 0, 1), Err(TransportError::CountExceedsNodes { .. })));
    }
}
