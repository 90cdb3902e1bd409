//! Deterministic synthetic networks and baseline datasets.

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envdata::{parse_timestamp, EnvDataset, EnvRecord};
use crate::network::{parse_inp, Network, Node, NodeKind, Pipe, PipeStatus, TankGeometry};

/// The bundled ten-node demonstration network.
pub const DEMO_INP: &str = include_str!("../data/demo10.inp");

pub fn demo_network() -> Network {
    parse_inp(DEMO_INP).expect("bundled network parses")
}

const DIAMETERS_MM: [f64; 12] = [50.0, 63.0, 75.0, 90.0, 110.0, 160.0, 200.0, 250.0, 315.0, 400.0, 500.0, 600.0];

/// Smallest standard diameter carrying `flow_lps` at or under 0.8 m/s.
fn size_pipe(flow_lps: f64) -> f64 {
    let q = flow_lps / 1000.0;
    let d = (4.0 * q / (std::f64::consts::PI * 0.8)).sqrt() * 1000.0;
    DIAMETERS_MM.iter().copied().find(|&x| x >= d).unwrap_or(DIAMETERS_MM[DIAMETERS_MM.len() - 1])
}

fn junction(id: String, elevation: f64, demand: f64, coord: (f64, f64)) -> Node {
    Node {
        id,
        kind: NodeKind::Junction,
        elevation,
        base_demand: demand,
        head: None,
        coord: Some(coord),
        initial_quality: 0.0,
        pattern: None,
        tank: None,
    }
}

/// Tree-shaped gravity network: a reservoir fills a tank that feeds
/// `junctions` dead-end branches. `extra_loops` closes that many cycles
/// between nearby junctions.
pub fn dead_end_network(junctions: usize, extra_loops: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::default();
    net.title.push(format!("synthetic dead-end network, {junctions} junctions, seed {seed}"));
    net.global_bulk = -0.5;
    let reservoir = Node {
        id: "R1".into(),
        kind: NodeKind::Reservoir,
        elevation: 160.0,
        base_demand: 0.0,
        head: Some(160.0),
        coord: Some((-600.0, 0.0)),
        initial_quality: 0.0,
        pattern: None,
        tank: None,
    };
    let tank = Node {
        id: "T1".into(),
        kind: NodeKind::Tank,
        elevation: 130.0,
        base_demand: 0.0,
        head: Some(135.0),
        coord: Some((-200.0, 0.0)),
        initial_quality: 0.0,
        pattern: None,
        tank: Some(TankGeometry {
            init_level: 5.0,
            min_level: 0.0,
            max_level: 10.0,
            diameter: 20.0,
            min_volume: 0.0,
            volume_curve: None,
        }),
    };

    // parent of each junction; children capped at three
    let mut parent = Vec::with_capacity(junctions);
    let mut children = vec![0usize; junctions];
    let mut coords: Vec<(f64, f64)> = Vec::with_capacity(junctions);
    let mut depth = vec![0usize; junctions];
    for i in 0..junctions {
        let (p, c) = if i == 0 {
            (None, (0.0, 0.0))
        } else {
            let lo = i.saturating_sub(12);
            let mut p = rng.random_range(lo..i);
            while children[p] >= 3 {
                p = rng.random_range(0..i);
            }
            children[p] += 1;
            let angle = rng.random_range(-1.2..1.2) + if depth[p] % 2 == 0 { 0.0 } else { 1.57 };
            let len = rng.random_range(80.0..250.0);
            let (px, py) = coords[p];
            depth[i] = depth[p] + 1;
            (Some(p), (px + len * f64::cos(angle), py + len * f64::sin(angle)))
        };
        parent.push(p);
        coords.push(c);
    }
    let demand: Vec<f64> = (0..junctions).map(|_| (rng.random_range(0.05..0.6f64) * 1000.0).round() / 1000.0).collect();
    let mut carried = demand.clone();
    for i in (1..junctions).rev() {
        let p = parent[i].expect("non-root");
        carried[p] += carried[i];
    }
    for i in 0..junctions {
        let elevation = (rng.random_range(20.0..60.0f64) * 10.0).round() / 10.0;
        net.add_node(junction(format!("J{:04}", i + 1), elevation, demand[i], coords[i])).expect("fresh id");
    }
    net.add_node(reservoir).expect("fresh id");
    net.add_node(tank).expect("fresh id");
    let total: f64 = demand.iter().sum();
    let add_pipe = |net: &mut Network, id: String, from: String, to: String, length: f64, diameter: f64| {
        net.add_pipe(Pipe {
            id,
            from,
            to,
            length: length.max(1.0).round(),
            diameter,
            roughness: 120.0,
            minor_loss: 0.0,
            status: PipeStatus::Open,
        })
        .expect("endpoints exist");
    };
    add_pipe(&mut net, "P0000".into(), "R1".into(), "T1".into(), 400.0, size_pipe(total * 1.5));
    add_pipe(&mut net, "P0001".into(), "T1".into(), "J0001".into(), 200.0, size_pipe(total));
    for i in 1..junctions {
        let p = parent[i].expect("non-root");
        let (a, b) = (coords[p], coords[i]);
        let len = (a.0 - b.0).hypot(a.1 - b.1);
        add_pipe(&mut net, format!("P{:04}", i + 1), format!("J{:04}", p + 1), format!("J{:04}", i + 1), len, size_pipe(carried[i]));
    }
    let mut made = 0;
    let mut attempts = 0;
    while made < extra_loops && attempts < extra_loops * 50 {
        attempts += 1;
        let a = rng.random_range(0..junctions);
        let b = rng.random_range(0..junctions);
        if a == b || parent[a] == Some(b) || parent[b] == Some(a) {
            continue;
        }
        let len = (coords[a].0 - coords[b].0).hypot(coords[a].1 - coords[b].1);
        if len > 400.0 {
            continue;
        }
        add_pipe(&mut net, format!("L{:04}", made + 1), format!("J{:04}", a + 1), format!("J{:04}", b + 1), len, 110.0);
        made += 1;
    }
    net
}

/// A network with 227 junctions, one tank and one reservoir.
pub fn case_study_network() -> Network {
    dead_end_network(227, 0, 2024)
}

/// About a thousand junctions with a few loops.
pub fn large_network() -> Network {
    dead_end_network(1000, 40, 7)
}

/// First timestamp of generated datasets.
pub fn start_time() -> NaiveDateTime {
    parse_timestamp("2024-10-20T00:00:00").expect("literal")
}

/// Hourly records for every node, with precursor levels low enough that
/// the default models stay under the thresholds. Chlorine is left to
/// the transport simulation.
pub fn baseline_dataset(net: &Network, hours: usize, seed: u64) -> EnvDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contracts: Vec<f64> = net
        .nodes
        .iter()
        .map(|n| {
            if n.kind.is_fixed_head() {
                0.0
            } else {
                [0.0, 0.0, 2.5, 5.0, 12.5][rng.random_range(0..5)]
            }
        })
        .collect();
    let mut records = Vec::with_capacity(hours * net.nodes.len());
    let t0 = start_time();
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    for h in 0..hours {
        let t = t0 + Duration::hours(h as i64);
        for (i, n) in net.nodes.iter().enumerate() {
            let mut r = EnvRecord::empty(&n.id, t);
            r.contracts = Some(contracts[i]);
            r.temperature = Some(round2(rng.random_range(12.12..=23.91)));
            r.ph = Some(round2(rng.random_range(7.0..=8.3)));
            r.toc = Some(round2(rng.random_range(0.14..=1.0)));
            r.don = Some(round2(rng.random_range(2.04..=13.8)));
            r.br = Some(round2(rng.random_range(2.82..=4.9)));
            records.push(r);
        }
    }
    EnvDataset::new(records).expect("unique keys")
}
