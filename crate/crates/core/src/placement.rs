//! Sensor selection per objective, the expected-detection-time sweep and
//! cross-objective consensus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbp::Family;
use crate::scoring::NodeScore;
use crate::transport::{TransportResult, HORIZON_MINUTES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("metric for objective {objective} is unavailable: {reason}")]
    MetricUnavailable { objective: Objective, reason: String },
    #[error("expected-time placement needs at least one scenario")]
    NoScenarios,
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("unknown candidate node {0}")]
    UnknownCandidate(String),
    #[error("sensor count must be at least 1")]
    ZeroSensors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    TimeOfDetection,
    NormalizedScore,
    Contracts,
    ThmEvents,
    HaaEvents,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::TimeOfDetection,
        Objective::NormalizedScore,
        Objective::Contracts,
        Objective::ThmEvents,
        Objective::HaaEvents,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::TimeOfDetection => "time_of_detection",
            Objective::NormalizedScore => "normalized_score",
            Objective::Contracts => "contracts",
            Objective::ThmEvents => "thm_events",
            Objective::HaaEvents => "haa_events",
        }
    }

    pub fn minimizes(self) -> bool {
        self == Objective::TimeOfDetection
    }

    pub fn is_mandatory(self) -> bool {
        matches!(self, Objective::TimeOfDetection | Objective::NormalizedScore)
    }

    fn family(self) -> Option<Family> {
        match self {
            Objective::ThmEvents => Some(Family::Thm),
            Objective::HaaEvents => Some(Family::Haa),
            _ => None,
        }
    }

    /// Metric of one node; `None` sorts last.
    pub fn metric(self, s: &NodeScore) -> Option<f64> {
        match self {
            Objective::TimeOfDetection => s.detection_time,
            Objective::NormalizedScore => Some(s.total),
            Objective::Contracts => Some(s.contracts),
            Objective::ThmEvents | Objective::HaaEvents => {
                s.events.get(&self.family().expect("event objective")).map(|&e| e as f64)
            }
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown objective {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub node: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub k: usize,
    pub expected_minutes: f64,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub counts: BTreeMap<String, usize>,
    pub shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub per_objective: BTreeMap<Objective, Vec<Selected>>,
    pub consensus: Consensus,
    pub pareto: Vec<ParetoPoint>,
}

/// Exact top-k (bottom-k for detection time) over the candidates, ties by
/// node id. Candidates without a metric rank last.
pub fn place_separable(
    candidates: &[&NodeScore],
    objective: Objective,
    k: usize,
    contracts_available: bool,
) -> Result<Vec<Selected>, PlacementError> {
    if k == 0 {
        return Err(PlacementError::ZeroSensors);
    }
    if candidates.is_empty() {
        return Err(PlacementError::NoCandidates);
    }
    if objective == Objective::Contracts && !contracts_available {
        return Err(PlacementError::MetricUnavailable { objective, reason: "no contracts data".into() });
    }
    if let Some(f) = objective.family() {
        if candidates.iter().any(|c| !c.events.contains_key(&f)) {
            return Err(PlacementError::MetricUnavailable { objective, reason: format!("family {f} is not active") });
        }
    }
    let mut ranked: Vec<(Option<f64>, &str)> = candidates.iter().map(|c| (objective.metric(c), c.node.as_str())).collect();
    ranked.sort_by(|a, b| {
        let by_metric = match (a.0, b.0) {
            (Some(x), Some(y)) if objective.minimizes() => x.total_cmp(&y),
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_metric.then_with(|| a.1.cmp(b.1))
    });
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|(value, node)| Selected { node: node.to_string(), value })
        .collect())
}

/// Capped arrival minutes, one row per scenario and one column per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalMatrix {
    pub candidates: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl ArrivalMatrix {
    /// `candidates` are node ids; `index` maps them to network positions.
    pub fn new(
        scenarios: &[TransportResult],
        candidates: &[String],
        index: impl Fn(&str) -> Option<usize>,
    ) -> Result<Self, PlacementError> {
        if scenarios.is_empty() {
            return Err(PlacementError::NoScenarios);
        }
        if candidates.is_empty() {
            return Err(PlacementError::NoCandidates);
        }
        let cols = candidates
            .iter()
            .map(|c| index(c).ok_or_else(|| PlacementError::UnknownCandidate(c.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = scenarios
            .iter()
            .map(|s| cols.iter().map(|&i| s.capped_arrival(i)).collect())
            .collect();
        Ok(Self { candidates: candidates.to_vec(), rows })
    }

    pub fn from_rows(candidates: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, PlacementError> {
        if rows.is_empty() {
            return Err(PlacementError::NoScenarios);
        }
        if candidates.is_empty() {
            return Err(PlacementError::NoCandidates);
        }
        let rows = rows.into_iter().map(|r| r.into_iter().map(|x| x.min(HORIZON_MINUTES)).collect()).collect();
        Ok(Self { candidates, rows })
    }

    pub fn scenarios(&self) -> usize {
        self.rows.len()
    }

    /// Mean over scenarios of the earliest arrival among `set`.
    pub fn expected(&self, set: &[usize]) -> f64 {
        self.total(set) / self.rows.len() as f64
    }

    fn total(&self, set: &[usize]) -> f64 {
        self.rows
            .iter()
            .map(|r| set.iter().map(|&j| r[j]).fold(HORIZON_MINUTES, f64::min))
            .sum()
    }

    /// Adds sensors one at a time, each maximizing the drop in expected
    /// time; ties go to the earlier candidate. Returns the value after every step.
    pub fn greedy_extend(&self, start: &[usize], k: usize) -> (Vec<usize>, Vec<f64>) {
        let mut chosen = start.to_vec();
        let mut taken = vec![false; self.candidates.len()];
        for &j in start {
            taken[j] = true;
        }
        let mut best: Vec<f64> = self
            .rows
            .iter()
            .map(|r| chosen.iter().map(|&j| r[j]).fold(HORIZON_MINUTES, f64::min))
            .collect();
        let mut values = Vec::new();
        while chosen.len() < k.min(self.candidates.len()) {
            let totals: Vec<f64> = (0..self.candidates.len())
                .into_par_iter()
                .map(|j| {
                    if taken[j] {
                        f64::INFINITY
                    } else {
                        self.rows.iter().zip(&best).map(|(r, b)| b.min(r[j])).sum()
                    }
                })
                .collect();
            let mut pick = None;
            for (j, &t) in totals.iter().enumerate() {
                if !taken[j] && pick.is_none_or(|p: usize| t < totals[p]) {
                    pick = Some(j);
                }
            }
            let j = pick.expect("untaken candidate exists");
            taken[j] = true;
            chosen.push(j);
            for (r, b) in self.rows.iter().zip(best.iter_mut()) {
                *b = b.min(r[j]);
            }
            values.push(totals[j] / self.rows.len() as f64);
        }
        (chosen, values)
    }

    /// Repeatedly applies the single swap (one chosen sensor out, one
    /// candidate in) that lowers the expected time most, until none does.
    pub fn refine_swaps(&self, mut set: Vec<usize>) -> (Vec<usize>, f64) {
        let n = self.candidates.len();
        let mut current = self.total(&set);
        loop {
            let mut taken = vec![false; n];
            for &j in &set {
                taken[j] = true;
            }
            // per scenario: best value, its position in `set`, second best
            let tops: Vec<(f64, usize, f64)> = self
                .rows
                .iter()
                .map(|r| {
                    let (mut b1, mut at, mut b2) = (HORIZON_MINUTES, usize::MAX, HORIZON_MINUTES);
                    for (pos, &j) in set.iter().enumerate() {
                        if r[j] < b1 {
                            b2 = b1;
                            b1 = r[j];
                            at = pos;
                        } else if r[j] < b2 {
                            b2 = r[j];
                        }
                    }
                    (b1, at, b2)
                })
                .collect();
            let best = (0..n)
                .into_par_iter()
                .filter(|&j| !taken[j])
                .map(|j| {
                    let mut local = (f64::INFINITY, usize::MAX, j);
                    for pos in 0..set.len() {
                        let t: f64 = self
                            .rows
                            .iter()
                            .zip(&tops)
                            .map(|(r, &(b1, at, b2))| r[j].min(if at == pos { b2 } else { b1 }))
                            .sum();
                        if t < local.0 {
                            local = (t, pos, j);
                        }
                    }
                    local
                })
                .reduce(
                    || (f64::INFINITY, usize::MAX, usize::MAX),
                    |a, b| if b.0 < a.0 || (b.0 == a.0 && (b.2, b.1) < (a.2, a.1)) { b } else { a },
                );
            if best.1 == usize::MAX || best.0 >= current - 1e-12 * current.max(1.0) {
                break;
            }
            set[best.1] = best.2;
            current = self.total(&set);
        }
        (set, current / self.rows.len() as f64)
    }

    /// Greedy selection followed by swap refinement.
    pub fn heuristic(&self, k: usize) -> (Vec<usize>, f64) {
        let (set, _) = self.greedy_extend(&[], k);
        self.refine_swaps(set)
    }

    /// Best k-subset by enumeration in lexicographic order; the first
    /// optimum found wins.
    pub fn exhaustive(&self, k: usize) -> (Vec<usize>, f64) {
        let n = self.candidates.len();
        let k = k.min(n);
        let mut idx: Vec<usize> = (0..k).collect();
        let mut best = (idx.clone(), self.total(&idx));
        loop {
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
            let v = self.total(&idx);
            if v < best.1 {
                best = (idx.clone(), v);
            }
        }
        (best.0, best.1 / self.rows.len() as f64)
    }
}

/// Candidate count and sensor count at or below which the exact path runs.
pub const EXACT_MAX_CANDIDATES: usize = 20;
pub const EXACT_MAX_K: usize = 5;

/// Selects `k` sensors minimizing the expected detection time over the
/// scenarios. Returns candidate indices and the expected minutes.
pub fn place_expected_time(m: &ArrivalMatrix, k: usize) -> Result<(Vec<usize>, f64), PlacementError> {
    if k == 0 {
        return Err(PlacementError::ZeroSensors);
    }
    let k = k.min(m.candidates.len());
    if m.candidates.len() <= EXACT_MAX_CANDIDATES && k <= EXACT_MAX_K {
        return Ok(m.exhaustive(k));
    }
    Ok(m.heuristic(k))
}

/// Default sensor counts for the sweep.
pub const DEFAULT_K_VALUES: [usize; 8] = [1, 5, 10, 20, 40, 60, 80, 100];

/// Expected detection time for each sensor count. Each point also tries
/// extending the previous point's sensors, which keeps the curve
/// non-increasing when the exact and greedy paths meet.
pub fn pareto_sweep(m: &ArrivalMatrix, k_values: &[usize]) -> Result<Vec<ParetoPoint>, PlacementError> {
    let mut ks: Vec<usize> = k_values.iter().map(|&k| k.min(m.candidates.len())).filter(|&k| k > 0).collect();
    ks.dedup();
    let mut out: Vec<ParetoPoint> = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    for k in ks {
        let (mut set, mut value) = place_expected_time(m, k)?;
        if let Some(p) = &prev {
            let (ext, _) = m.greedy_extend(p, k);
            let (ext, v) = m.refine_swaps(ext);
            if v < value {
                set = ext;
                value = v;
            }
        }
        out.push(ParetoPoint {
            k,
            expected_minutes: value,
            nodes: set.iter().map(|&j| m.candidates[j].clone()).collect(),
        });
        prev = Some(set);
    }
    Ok(out)
}

/// How many objective lists contain each node, and each node's share.
pub fn consensus(per_objective: &BTreeMap<Objective, Vec<Selected>>) -> Consensus {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for list in per_objective.values() {
        let unique: BTreeSet<&str> = list.iter().map(|s| s.node.as_str()).collect();
        for n in unique {
            *counts.entry(n.to_string()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let shares = counts
        .iter()
        .map(|(n, &c)| (n.clone(), if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    Consensus { counts, shares }
}
