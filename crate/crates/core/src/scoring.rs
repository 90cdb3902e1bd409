//! Threshold exceedance events and node scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbp::Family;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("no node reaches relative score {cutoff}")]
    EmptyCandidateSet { cutoff: f64 },
}

/// Concentrations per family, per node, in timestamp order (µg/L).
pub type Series = BTreeMap<Family, BTreeMap<String, Vec<f64>>>;

/// Event counts per node, per family.
pub type EventCounts = BTreeMap<String, BTreeMap<Family, usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node: String,
    pub events: BTreeMap<Family, usize>,
    pub normalized_percent: BTreeMap<Family, f64>,
    pub weighted: BTreeMap<Family, f64>,
    pub total: f64,
    pub relative: f64,
    /// Minutes from injection; `None` when chlorine never arrives.
    pub detection_time: Option<f64>,
    pub contracts: f64,
}

/// Rounds to two decimals, halves away from zero. Products like
/// `1.005 * 100` land a hair below the half, so near-ties count as ties.
pub fn round2(x: f64) -> f64 {
    let y = x * 100.0;
    let whole = y.trunc();
    let frac = (y - whole).abs();
    let r = if (frac - 0.5).abs() < 1e-9 { whole + y.signum() } else { y.round() };
    r / 100.0
}

/// Counts, per node and family, the samples strictly above the threshold.
pub fn detect_events(series: &Series, thresholds: &BTreeMap<Family, f64>) -> EventCounts {
    let mut out: EventCounts = BTreeMap::new();
    for (family, nodes) in series {
        let Some(&limit) = thresholds.get(family) else { continue };
        for (node, values) in nodes {
            let count = values.iter().filter(|&&c| c > limit).count();
            out.entry(node.clone()).or_default().insert(family.clone(), count);
        }
    }
    out
}

/// Normalizes event counts to percentages split evenly across the active
/// families, applies the family weights and ranks nodes by total.
pub fn score_nodes(events: &EventCounts, timestamps: usize, weights: &BTreeMap<Family, f64>) -> Vec<NodeScore> {
    let t = timestamps.max(1) as f64;
    let f = weights.len().max(1) as f64;
    let mut scores: Vec<NodeScore> = events
        .iter()
        .map(|(node, counts)| {
            let mut normalized_percent = BTreeMap::new();
            let mut weighted = BTreeMap::new();
            let mut sum = 0.0;
            for (family, &w) in weights {
                let e = counts.get(family).copied().unwrap_or(0);
                let pct = round2(e as f64 / t * 100.0 / f);
                let ws = round2(pct * w);
                sum += ws;
                normalized_percent.insert(family.clone(), pct);
                weighted.insert(family.clone(), ws);
            }
            let events = weights
                .keys()
                .map(|fam| (fam.clone(), counts.get(fam).copied().unwrap_or(0)))
                .collect();
            NodeScore {
                node: node.clone(),
                events,
                normalized_percent,
                weighted,
                total: round2(sum),
                relative: 0.0,
                detection_time: None,
                contracts: 0.0,
            }
        })
        .collect();
    let max = scores.iter().map(|s| s.total).fold(0.0, f64::max);
    if max > 0.0 {
        for s in &mut scores {
            s.relative = s.total / max;
        }
    }
    scores
}

/// Nodes with relative score at or above `cutoff`, best first, ties by id.
pub fn filter_candidates(scores: &[NodeScore], cutoff: f64) -> Result<Vec<String>, ScoringError> {
    let mut keep: Vec<&NodeScore> = scores.iter().filter(|s| s.relative >= cutoff).collect();
    if keep.is_empty() {
        return Err(ScoringError::EmptyCandidateSet { cutoff });
    }
    keep.sort_by(|a, b| b.relative.total_cmp(&a.relative).then_with(|| a.node.cmp(&b.node)));
    Ok(keep.into_iter().map(|s| s.node.clone()).collect())
}

/// Comma-separated score table with one row per node.
pub fn scores_csv(scores: &[NodeScore]) -> String {
    let families: Vec<Family> = scores.first().map(|s| s.weighted.keys().cloned().collect()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["node".to_string()];
    for suffix in ["events", "normalized_percent", "weighted"] {
        header.extend(families.iter().map(|f| format!("{}_{suffix}", f.label())));
    }
    header.extend(["total", "relative", "detection_time", "contracts"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for s in scores {
        let mut row = vec![s.node.clone()];
        row.extend(families.iter().map(|f| s.events[f].to_string()));
        row.extend(families.iter().map(|f| format!("{:.2}", s.normalized_percent[f])));
        row.extend(families.iter().map(|f| format!("{:.2}", s.weighted[f])));
        row.push(format!("{:.2}", s.total));
        row.push(s.relative.to_string());
        row.push(s.detection_time.map(|t| t.to_string()).unwrap_or_default());
        row.push(s.contracts.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(rows: &[(&str, usize, usize)]) -> EventCounts {
        rows.iter()
            .map(|(n, t, h)| (n.to_string(), BTreeMap::from([(Family::Thm, *t), (Family::Haa, *h)])))
            .collect()
    }

    fn weights(t: f64, h: f64) -> BTreeMap<Family, f64> {
        BTreeMap::from([(Family::Thm, t), (Family::Haa, h)])
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round2(1.005), 1.01);
        assert_eq!(round2(-1.005), -1.01);
        assert_eq!(round2(2.675), 2.68);
        assert_eq!(round2(0.004), 0.0);
        assert_eq!(round2(24.404), 24.4);
    }

    #[test]
    fn strict_threshold() {
        let series: Series = BTreeMap::from([(
            Family::Thm,
            BTreeMap::from([("A".to_string(), vec![120.0, 100.0, 99.0]), ("B".to_string(), vec![0.0; 3])]),
        )]);
        let ev = detect_events(&series, &BTreeMap::from([(Family::Thm, 100.0)]));
        assert_eq!(ev["A"][&Family::Thm], 1);
        assert_eq!(ev["B"][&Family::Thm], 0);
    }

    #[test]
    fn hand_computed_scores() {
        let s = score_nodes(&counts(&[("A", 84, 0), ("B", 0, 0)]), 168, &weights(3.0, 1.0));
        assert_eq!(s[0].normalized_percent[&Family::Thm], 25.0);
        assert_eq!(s[0].weighted[&Family::Thm], 75.0);
        assert_eq!(s[0].total, 75.0);
        assert_eq!(s[0].relative, 1.0);
        assert_eq!(s[1].relative, 0.0);
    }

    #[test]
    fn zero_events_everywhere() {
        let s = score_nodes(&counts(&[("A", 0, 0), ("B", 0, 0)]), 168, &weights(0.4, 0.3));
        assert!(s.iter().all(|x| x.total == 0.0 && x.relative == 0.0));
        assert!(filter_candidates(&s, 0.9).is_err());
        assert_eq!(filter_candidates(&s, 0.0).unwrap(), vec!["A", "B"]);
    }

    #[test]
    fn candidate_cutoff() {
        let mut s = score_nodes(&counts(&[("a", 1, 0), ("b", 1, 0), ("c", 1, 0), ("d", 1, 0)]), 10, &weights(1.0, 1.0));
        for (x, r) in s.iter_mut().zip([1.0, 0.95, 0.89, 0.2]) {
            x.relative = r;
        }
        assert_eq!(filter_candidates(&s, 0.9).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let s = score_nodes(&counts(&[("A", 84, 2), ("B", 0, 0)]), 168, &weights(3.0, 1.0));
        let text = scores_csv(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("node,THM_events,HAA_events"));
        assert!(lines[1].starts_with("A,84,2,25.00,0.60,75.00,0.60,75.60"));
    }

    proptest! {
        #[test]
        fn percentages_bounded(rows in prop::collection::vec((0usize..=168, 0usize..=168), 1..20),
                               wt in 0.0f64..=5.0, wh in 0.0f64..=5.0) {
            let ev: EventCounts = rows.iter().enumerate()
                .map(|(i, (t, h))| (format!("N{i:02}"), BTreeMap::from([(Family::Thm, *t), (Family::Haa, *h)])))
                .collect();
            let s = score_nodes(&ev, 168, &weights(wt, wh));
            for x in &s {
                let sum: f64 = x.normalized_percent.values().sum();
                prop_assert!(sum <= 100.0 + 1e-9);
                for v in x.normalized_percent.values() {
                    prop_assert!(*v >= 0.0 && *v <= 50.0);
                }
                prop_assert!((0.0..=1.0).contains(&x.relative));
            }
            if s.iter().any(|x| x.total > 0.0) {
                prop_assert!(s.iter().any(|x| x.relative == 1.0));
            }
        }

        #[test]
        fn events_invariant_under_permutation(mut values in prop::collection::vec(0.0f64..200.0, 1..50), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let th = BTreeMap::from([(Family::Thm, 100.0)]);
            let a = detect_events(&BTreeMap::from([(Family::Thm, BTreeMap::from([("n".to_string(), values.clone())]))]), &th);
            values.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = detect_events(&BTreeMap::from([(Family::Thm, BTreeMap::from([("n".to_string(), values)]))]), &th);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn adding_an_event_never_lowers_a_node(rows in prop::collection::vec((0usize..168, 0usize..168), 2..15),
                                               pick in any::<prop::sample::Index>(), wt in 0.0f64..=5.0, wh in 0.0f64..=5.0) {
            let ev: EventCounts = rows.iter().enumerate()
                .map(|(i, (t, h))| (format!("N{i:02}"), BTreeMap::from([(Family::Thm, *t), (Family::Haa, *h)])))
                .collect();
            let target = format!("N{:02}", pick.index(rows.len()));
            let before = score_nodes(&ev, 168, &weights(wt, wh));
            let mut ev2 = ev.clone();
            *ev2.get_mut(&target).unwrap().get_mut(&Family::Thm).unwrap() += 1;
            let after = score_nodes(&ev2, 168, &weights(wt, wh));
            let rank = |s: &[NodeScore]| {
                let me = s.iter().find(|x| x.node == target).unwrap().total;
                s.iter().filter(|x| x.total > me).count()
            };
            let tb = before.iter().find(|x| x.node == target).unwrap().total;
            let ta = after.iter().find(|x| x.node == target).unwrap().total;
            prop_assert!(ta >= tb);
            prop_assert!(rank(&after) <= rank(&before));
        }

        #[test]
        fn scaling_weights_keeps_candidate_order(rows in prop::collection::vec((0usize..=168, 0usize..=168), 1..15),
                                                 wt in 1u32..=5, wh in 1u32..=5, lambda in 1u32..=4) {
            let ev: EventCounts = rows.iter().enumerate()
                .map(|(i, (t, h))| (format!("N{i:02}"), BTreeMap::from([(Family::Thm, *t), (Family::Haa, *h)])))
                .collect();
            // integer weights keep weighted scores exact to the cent
            let w1 = weights(wt as f64, wh as f64);
            let w2 = weights((wt * lambda) as f64, (wh * lambda) as f64);
            let order = |w: &BTreeMap<Family, f64>| {
                let mut s = score_nodes(&ev, 168, w);
                s.sort_by(|a, b| b.total.total_cmp(&a.total).then_with(|| a.node.cmp(&b.node)));
                s.into_iter().map(|x| x.node).collect::<Vec<_>>()
            };
            prop_assert_eq!(order(&w1), order(&w2));
        }
    }
}
