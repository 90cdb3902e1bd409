//! Reference implementations used only by the tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use dbp_core::network::{Network, NodeKind};

/// Hardy-Cross loop balancing for networks with a single fixed-head node.
/// Returns L/s per pipe. Headloss is 10.67·L·Q^1.852 / (C^1.852·D^4.87).
pub fn hardy_cross(net: &Network, iterations: usize) -> Vec<f64> {
    let n = net.nodes.len();
    let idx: BTreeMap<&str, usize> = net.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let ends: Vec<(usize, usize)> = net.pipes.iter().map(|p| (idx[p.from.as_str()], idx[p.to.as_str()])).collect();
    let sources: Vec<usize> = (0..n).filter(|&i| net.nodes[i].kind != NodeKind::Junction).collect();
    assert_eq!(sources.len(), 1, "oracle handles one source");
    let root = sources[0];

    let mut adj = vec![Vec::new(); n];
    for (k, &(a, b)) in ends.iter().enumerate() {
        adj[a].push(k);
        adj[b].push(k);
    }
    // BFS spanning tree
    let mut parent_pipe = vec![usize::MAX; n];
    let mut order = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    let mut in_tree = vec![false; ends.len()];
    while let Some(u) = queue.pop_front() {
        for &k in &adj[u] {
            let (a, b) = ends[k];
            let v = if a == u { b } else { a };
            if !seen[v] {
                seen[v] = true;
                parent_pipe[v] = k;
                in_tree[k] = true;
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    let other = |k: usize, u: usize| if ends[k].0 == u { ends[k].1 } else { ends[k].0 };

    // initial flows: tree carries every downstream demand, chords carry zero
    let mut q = vec![0.0; ends.len()];
    let mut load: Vec<f64> = net.nodes.iter().map(|n| if n.kind == NodeKind::Junction { n.base_demand } else { 0.0 }).collect();
    for &v in order.iter().rev() {
        if v == root {
            continue;
        }
        let k = parent_pipe[v];
        let u = other(k, v);
        // flow u -> v in pipe orientation
        q[k] = if ends[k].1 == v { load[v] } else { -load[v] };
        load[u] += load[v];
    }

    // fundamental loops as signed pipe lists
    let path_to_root = |mut v: usize| {
        let mut p = Vec::new();
        while v != root {
            let k = parent_pipe[v];
            p.push((k, v));
            v = other(k, v);
        }
        p
    };
    let mut loops: Vec<Vec<(usize, f64)>> = Vec::new();
    for k in 0..ends.len() {
        if in_tree[k] {
            continue;
        }
        let (a, b) = ends[k];
        // loop: a -> b along chord, then b up to root, then root down to a
        let mut lp = vec![(k, 1.0)];
        let pb = path_to_root(b);
        let pa = path_to_root(a);
        let common: std::collections::BTreeSet<usize> =
            pb.iter().map(|x| x.0).collect::<std::collections::BTreeSet<_>>().intersection(&pa.iter().map(|x| x.0).collect()).copied().collect();
        for &(pk, child) in &pb {
            if common.contains(&pk) {
                continue;
            }
            // traversing child -> parent
            lp.push((pk, if ends[pk].0 == child { 1.0 } else { -1.0 }));
        }
        for &(pk, child) in &pa {
            if common.contains(&pk) {
                continue;
            }
            // traversing parent -> child
            lp.push((pk, if ends[pk].1 == child { 1.0 } else { -1.0 }));
        }
        loops.push(lp);
    }

    let r: Vec<f64> = net
        .pipes
        .iter()
        .map(|p| 10.67 * p.length / (p.roughness.powf(1.852) * (p.diameter / 1000.0).powf(4.87)))
        .collect();
    for _ in 0..iterations {
        let mut max_dq: f64 = 0.0;
        for lp in &loops {
            let (mut num, mut den) = (0.0, 0.0);
            for &(k, s) in lp {
                let qm = q[k] / 1000.0 * s;
                num += r[k] * qm * qm.abs().powf(0.852);
                den += 1.852 * r[k] * qm.abs().powf(0.852);
            }
            let dq = -num / den * 1000.0;
            for &(k, s) in lp {
                q[k] += s * dq;
            }
            max_dq = max_dq.max(dq.abs());
        }
        if max_dq < 1e-13 {
            break;
        }
    }
    q
}

/// Classical fourth-order Runge-Kutta on dC/dt = -kb·C^n.
pub fn rk4_decay(c0: f64, kb: f64, order: f64, hours: f64, steps: usize) -> f64 {
    let f = |c: f64| -kb * c.max(0.0).powf(order);
    let h = hours / steps as f64;
    let mut c = c0;
    for _ in 0..steps {
        let k1 = f(c);
        let k2 = f(c + 0.5 * h * k1);
        let k3 = f(c + 0.5 * h * k2);
        let k4 = f(c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    c
}

/// 72 hours, shortened for n < 1 to 95% of the time at which the
/// concentration reaches zero.
pub fn decay_horizon(c0: f64, kb: f64, order: f64) -> f64 {
    if order < 1.0 {
        let extinction = c0.powf(1.0 - order) / ((1.0 - order) * kb);
        72.0f64.min(0.95 * extinction)
    } else {
        72.0
    }
}

/// Dense ordinary-kriging solve with nalgebra.
pub fn kriging_dense(
    samples: &[((f64, f64), f64)],
    target: (f64, f64),
    gamma: impl Fn(f64) -> f64,
) -> (f64, Vec<f64>) {
    let k = samples.len();
    let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let a = nalgebra::DMatrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
        (true, true) => gamma(d(samples[i].0, samples[j].0)),
        (false, false) => 0.0,
        _ => 1.0,
    });
    let b = nalgebra::DVector::from_fn(k + 1, |i, _| if i < k { gamma(d(samples[i].0, target)) } else { 1.0 });
    let x = a.lu().solve(&b).expect("nonsingular");
    let w: Vec<f64> = x.iter().take(k).copied().collect();
    let value = w.iter().zip(samples).map(|(w, s)| w * s.1).sum();
    (value, w)
}

/// Every k-subset of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Mean over rows of the minimum among `set`, capped at `cap`.
pub fn expected_min(rows: &[Vec<f64>], set: &[usize], cap: f64) -> f64 {
    rows.iter().map(|r| set.iter().map(|&j| r[j]).fold(cap, f64::min)).sum::<f64>() / rows.len() as f64
}

/// Optimal expected detection time by brute force.
pub fn brute_expected(rows: &[Vec<f64>], k: usize, cap: f64) -> f64 {
    subsets(rows[0].len(), k).iter().map(|s| expected_min(rows, s, cap)).fold(f64::INFINITY, f64::min)
}

/// Reservoir R feeds the single loop A-B-D-C-A.
pub const ONE_LOOP_INP: &str = "\
[JUNCTIONS]
A 10 0
B 10 3.0
C 12 1.5
D 8 4.5

[RESERVOIRS]
R 80

[PIPES]
P0 R A 300 250 130
P1 A B 500 150 110
P2 B D 400 100 120
P3 A C 350 125 100
P4 C D 600 100 140

[OPTIONS]
Units LPS
Headloss H-W
";
