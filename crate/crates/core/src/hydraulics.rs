//! Demand-driven steady-state hydraulics with Hazen-Williams headloss,
//! solved by the global gradient (Newton on heads) method.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::EnvelopeMatrix;
use crate::network::{Network, NodeKind};

/// Hazen-Williams flow exponent.
pub const HW_EXPONENT: f64 = 1.852;
const HW_SI_COEFF: f64 = 10.667;
const DIAMETER_EXPONENT: f64 = 4.871;
/// Below this flow (m³/s) the headloss curve is replaced by its secant, so
/// the Newton conductance stays finite for stagnant pipes.
const MIN_LINEAR_FLOW: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicError {
    #[error("no convergence after {iterations} iterations (last flow change {last_change:e} L/s)")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("junction {node} is only connected to a source through a pump or valve")]
    UnsupportedElement { node: String },
    #[error("junction {node} is not connected to any fixed-head node")]
    Disconnected { node: String },
    #[error("head system is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// L/s per pipe, aligned with `Network::pipes`; positive is from → to.
    pub pipe_flows: Vec<f64>,
    /// meters per node, aligned with `Network::nodes`.
    pub node_heads: Vec<f64>,
    /// Maximum junction mass-balance error, L/s.
    pub residual: f64,
    /// Maximum |H_from − H_to − h_L(Q)| over open pipes, m.
    pub energy_residual: f64,
    pub iterations: usize,
}

impl FlowSolution {
    pub fn flow(&self, net: &Network, pipe_id: &str) -> Option<f64> {
        net.pipes.iter().position(|p| p.id == pipe_id).map(|k| self.pipe_flows[k])
    }

    pub fn head(&self, net: &Network, node_id: &str) -> Option<f64> {
        net.node_index(node_id).map(|i| self.node_heads[i])
    }
}

/// Hazen-Williams resistance in SI: `h_L = r · Q^1.852` with Q in m³/s,
/// length in m, diameter in mm.
pub fn hw_resistance(length_m: f64, diameter_mm: f64, roughness: f64) -> f64 {
    let d = diameter_mm / 1000.0;
    HW_SI_COEFF * length_m / (roughness.powf(HW_EXPONENT) * d.powf(DIAMETER_EXPONENT))
}

/// Signed headloss (m) for flow `q` in m³/s, and its derivative.
fn headloss(r: f64, q: f64) -> (f64, f64) {
    let aq = q.abs();
    if aq < MIN_LINEAR_FLOW {
        let g = r * MIN_LINEAR_FLOW.powf(HW_EXPONENT - 1.0);
        (g * q, g)
    } else {
        let h = r * aq.powf(HW_EXPONENT - 1.0);
        (h * q, HW_EXPONENT * h)
    }
}

/// Signed Hazen-Williams headloss (m) for a flow in L/s.
pub fn pipe_headloss(length_m: f64, diameter_mm: f64, roughness: f64, flow_lps: f64) -> f64 {
    headloss(hw_resistance(length_m, diameter_mm, roughness), flow_lps / 1000.0).0
}

pub fn solve_flows(net: &Network, tolerance: f64) -> Result<FlowSolution, HydraulicError> {
    solve_flows_with(net, tolerance, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_flows_with(
    net: &Network,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FlowSolution, HydraulicError> {
    let reach = net.reachable_from_sources(false);
    if let Some(i) = (0..net.nodes.len()).find(|&i| !reach[i] && net.nodes[i].kind == NodeKind::Junction) {
        let with_links = net.reachable_from_sources(true);
        let node = net.nodes[i].id.clone();
        return Err(if with_links[i] {
            HydraulicError::UnsupportedElement { node }
        } else {
            HydraulicError::Disconnected { node }
        });
    }

    // unknown index per junction
    let mut unknown = vec![usize::MAX; net.nodes.len()];
    let mut n_unknown = 0;
    for (i, node) in net.nodes.iter().enumerate() {
        if node.kind == NodeKind::Junction {
            unknown[i] = n_unknown;
            n_unknown += 1;
        }
    }

    let pipes: Vec<(usize, usize, f64, bool)> = net
        .pipes
        .iter()
        .map(|p| {
            let (a, b) = net.pipe_ends(p);
            (a, b, hw_resistance(p.length, p.diameter, p.roughness), p.status.is_open())
        })
        .collect();

    let edges: Vec<(usize, usize)> = pipes
        .iter()
        .filter(|(a, b, _, open)| *open && unknown[*a] != usize::MAX && unknown[*b] != usize::MAX)
        .map(|&(a, b, _, _)| (unknown[a], unknown[b]))
        .collect();
    let mut matrix = EnvelopeMatrix::new(n_unknown, &edges);

    let demand: Vec<f64> = net.nodes.iter().map(|n| n.base_demand / 1000.0).collect();
    let mut heads: Vec<f64> = net
        .nodes
        .iter()
        .map(|n| n.head.unwrap_or(n.elevation))
        .collect();
    // start from a velocity of ~0.3 m/s in every open pipe
    let mut flows: Vec<f64> = net
        .pipes
        .iter()
        .map(|p| {
            if p.status.is_open() {
                let d = p.diameter / 1000.0;
                std::f64::consts::PI * d * d / 4.0 * 0.3048
            } else {
                0.0
            }
        })
        .collect();

    let mut y = vec![0.0; pipes.len()];
    let mut cond = vec![0.0; pipes.len()];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iterations {
        matrix.clear();
        let mut rhs = vec![0.0; n_unknown];
        for (j, &i) in unknown.iter().enumerate() {
            if i != usize::MAX {
                rhs[i] = -demand[j];
            }
        }
        for (k, &(a, b, r, open)) in pipes.iter().enumerate() {
            if !open {
                continue;
            }
            let (h, g) = headloss(r, flows[k]);
            let c = 1.0 / g;
            cond[k] = c;
            y[k] = flows[k] - h / g;
            let (ua, ub) = (unknown[a], unknown[b]);
            // pipe leaves a, enters b
            if ua != usize::MAX {
                matrix.add(ua, ua, c);
                rhs[ua] -= y[k];
            }
            if ub != usize::MAX {
                matrix.add(ub, ub, c);
                rhs[ub] += y[k];
            }
            match (ua != usize::MAX, ub != usize::MAX) {
                (true, true) => matrix.add(ua, ub, -c),
                (true, false) => rhs[ua] += c * heads[b],
                (false, true) => rhs[ub] += c * heads[a],
                (false, false) => {}
            }
        }
        let solved = if n_unknown > 0 {
            matrix.factor_solve(&rhs).ok_or(HydraulicError::Singular)?
        } else {
            Vec::new()
        };
        for (j, &i) in unknown.iter().enumerate() {
            if i != usize::MAX {
                heads[j] = solved[i];
            }
        }
        let mut max_change: f64 = 0.0;
        for (k, &(a, b, _, open)) in pipes.iter().enumerate() {
            if !open {
                continue;
            }
            let q = y[k] + cond[k] * (heads[a] - heads[b]);
            max_change = max_change.max((q - flows[k]).abs());
            flows[k] = q;
        }
        last_change = max_change * 1000.0;
        if last_change <= tolerance {
            let flows_lps: Vec<f64> = flows.iter().map(|q| q * 1000.0).collect();
            let residual = mass_residual(net, &flows_lps);
            let energy_residual = pipes
                .iter()
                .enumerate()
                .filter(|(_, p)| p.3)
                .map(|(k, &(a, b, r, _))| (heads[a] - heads[b] - headloss(r, flows[k]).0).abs())
                .fold(0.0, f64::max);
            if residual <= tolerance.max(1e-12) {
                return Ok(FlowSolution {
                    pipe_flows: flows_lps,
                    node_heads: heads,
                    residual,
                    energy_residual,
                    iterations: iteration,
                });
            }
        }
    }
    Err(HydraulicError::NonConvergence { iterations: max_iterations, last_change })
}

/// Maximum |Σ inflow − Σ outflow − demand| over junctions, in L/s.
pub fn mass_residual(net: &Network, flows_lps: &[f64]) -> f64 {
    let mut balance: Vec<f64> = net.nodes.iter().map(|n| -n.base_demand).collect();
    for (k, p) in net.pipes.iter().enumerate() {
        let (a, b) = net.pipe_ends(p);
        balance[a] -= flows_lps[k];
        balance[b] += flows_lps[k];
    }
    net.nodes
        .iter()
        .zip(balance)
        .filter(|(n, _)| n.kind == NodeKind::Junction)
        .map(|(_, b)| b.abs())
        .fold(0.0, f64::max)
}
