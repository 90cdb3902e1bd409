//! End-to-end runs: network, flows, chlorine, data, models, scores and
//! placement, plus the run directory layout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbp::{thresholds, DbpModel, Family};
use crate::envdata::{
    assess_completeness, attach_reaction_time, contaminate, fill_chlorine, gap_fill, read_contracts_csv,
    read_env_csv, template_ranges, CompletenessReport, CompletenessThresholds, ContaminationTarget, EnvDataset,
    GapFillOptions, PrecursorBounds, TIME_VAR,
};
use crate::hydraulics::{solve_flows, FlowSolution, DEFAULT_TOLERANCE};
use crate::kriging::Variogram;
use crate::network::{parse_inp, validate_network, Network, NodeKind};
use crate::placement::{
    consensus, pareto_sweep, place_separable, ArrivalMatrix, Objective, PlacementResult, DEFAULT_K_VALUES,
};
use crate::scoring::{detect_events, filter_candidates, score_nodes, scores_csv, NodeScore, Series};
use crate::transport::{
    propagate_on, randomize_injection, DecayParams, FlowGraph, TransportResult, DEFAULT_DETECTION_LIMIT,
    HORIZON_MINUTES,
};

pub const MAX_SENSORS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Network,
    Hydraulics,
    Transport,
    Data,
    Contamination,
    Models,
    Scoring,
    Placement,
    Pareto,
    Serialization,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

fn at<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> RunError {
    move |e| RunError::Stage { stage, message: e.to_string() }
}

/// Where chlorine enters the network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Injection {
    /// Every tank, or every reservoir when there are no tanks.
    #[default]
    Sources,
    Nodes { nodes: Vec<String> },
    Randomized { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoConfig {
    pub enabled: bool,
    /// Number of single-node injection scenarios.
    pub scenarios: usize,
    pub seed: u64,
    pub k_values: Vec<usize>,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        Self { enabled: true, scenarios: 100, seed: 7, k_values: DEFAULT_K_VALUES.to_vec() }
    }
}

/// Raises precursors at the most central nodes before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    pub fraction: f64,
    pub families: BTreeSet<Family>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network_path: Option<PathBuf>,
    pub env_data_path: Option<PathBuf>,
    pub contracts_path: Option<PathBuf>,
    /// Built-in model name or formula per family.
    pub models: BTreeMap<Family, String>,
    /// µg/L.
    pub thresholds: BTreeMap<Family, f64>,
    pub weights: BTreeMap<Family, f64>,
    pub objectives: BTreeSet<Objective>,
    pub sensor_count: usize,
    pub cutoff: f64,
    pub injection: Injection,
    pub horizon_hours: u32,
    pub interval_minutes: u32,
    pub seed: u64,
    /// mg/L at the injection nodes.
    pub chlorine_dose: f64,
    /// Overrides the network's bulk coefficient, 1/h.
    pub bulk_decay_per_hour: Option<f64>,
    pub detection_limit: f64,
    /// Fixed reaction time for every node instead of water age.
    pub reaction_time_hours: Option<f64>,
    pub kriging: bool,
    pub variogram: Option<Variogram>,
    pub completeness: CompletenessThresholds,
    pub pareto: ParetoConfig,
    pub contamination: Option<ContaminationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network_path: None,
            env_data_path: None,
            contracts_path: None,
            models: BTreeMap::from([(Family::Thm, "sohn_thm".into()), (Family::Haa, "sohn_haa9".into())]),
            thresholds: BTreeMap::from([(Family::Thm, thresholds::THM_EU), (Family::Haa, thresholds::HAA_US)]),
            weights: BTreeMap::from([(Family::Thm, 0.4), (Family::Haa, 0.3)]),
            objectives: BTreeSet::from([Objective::TimeOfDetection, Objective::NormalizedScore]),
            sensor_count: 5,
            cutoff: 0.9,
            injection: Injection::Sources,
            horizon_hours: 168,
            interval_minutes: 60,
            seed: 42,
            chlorine_dose: 1.5,
            bulk_decay_per_hour: None,
            detection_limit: DEFAULT_DETECTION_LIMIT,
            reaction_time_hours: None,
            kriging: true,
            variogram: None,
            completeness: CompletenessThresholds::default(),
            pareto: ParetoConfig::default(),
            contamination: None,
        }
    }
}

impl RunConfig {
    /// Checks invariants and parses the model specs.
    pub fn validate(&self) -> Result<BTreeMap<Family, DbpModel>, RunError> {
        let err = |m: String| Err(RunError::Config(m));
        if !self.objectives.iter().any(|o| o.is_mandatory()) {
            return err("select time_of_detection or normalized_score (at least one is mandatory)".into());
        }
        if !(1..=MAX_SENSORS).contains(&self.sensor_count) {
            return err(format!("sensor_count must be in 1..={MAX_SENSORS}, got {}", self.sensor_count));
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return err(format!("cutoff must be in [0, 1], got {}", self.cutoff));
        }
        if self.models.is_empty() {
            return err("at least one DBP model is required".into());
        }
        let mut models = BTreeMap::new();
        for (family, spec) in &self.models {
            let m = DbpModel::parse(spec).map_err(|e| RunError::Config(format!("model for {family}: {e}")))?;
            match self.thresholds.get(family) {
                Some(&t) if t > 0.0 && t.is_finite() => {}
                Some(t) => return err(format!("threshold for {family} must be positive, got {t}")),
                None => return err(format!("no threshold for {family}")),
            }
            match self.weights.get(family) {
                Some(&w) if (0.0..=5.0).contains(&w) => {}
                Some(w) => return err(format!("weight for {family} must be in [0, 5], got {w}")),
                None => return err(format!("no weight for {family}")),
            }
            models.insert(family.clone(), m);
        }
        for (o, f) in [(Objective::ThmEvents, Family::Thm), (Objective::HaaEvents, Family::Haa)] {
            if self.objectives.contains(&o) && !self.models.contains_key(&f) {
                return err(format!("objective {o} needs a {f} model"));
            }
        }
        if self.horizon_hours == 0 || self.interval_minutes == 0 {
            return err("horizon_hours and interval_minutes must be positive".into());
        }
        if !(self.chlorine_dose >= 0.0) || !(self.detection_limit > 0.0) {
            return err("chlorine_dose must be non-negative and detection_limit positive".into());
        }
        if let Some(k) = self.bulk_decay_per_hour {
            if !(k >= 0.0) {
                return err(format!("bulk_decay_per_hour must be non-negative, got {k}"));
            }
        }
        if let Some(t) = self.reaction_time_hours {
            if !(t >= 0.0) {
                return err(format!("reaction_time_hours must be non-negative, got {t}"));
            }
        }
        if self.pareto.enabled {
            if self.pareto.scenarios == 0 {
                return err("pareto.scenarios must be positive".into());
            }
            let ks = &self.pareto.k_values;
            if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[1] <= w[0]) {
                return err("pareto.k_values must be positive and strictly ascending".into());
            }
        }
        if let Some(c) = &self.contamination {
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return err(format!("contamination.fraction must be in (0, 1], got {}", c.fraction));
            }
            if c.families.is_empty() || c.families.iter().any(|f| !self.models.contains_key(f)) {
                return err("contamination.families must name active families".into());
            }
        }
        Ok(models)
    }
}

/// File contents for a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunInputs {
    pub network: String,
    pub env_data: Option<String>,
    pub contracts: Option<String>,
}

impl RunInputs {
    /// Reads the files named in the config.
    pub fn from_config(config: &RunConfig) -> Result<Self, RunError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| RunError::Io { path: p.display().to_string(), message: e.to_string() })
        };
        let network = match &config.network_path {
            Some(p) => read(p)?,
            None => return Err(RunError::Config("network_path is required".into())),
        };
        Ok(Self {
            network,
            env_data: config.env_data_path.as_deref().map(read).transpose()?,
            contracts: config.contracts_path.as_deref().map(read).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub title: Vec<String>,
    pub nodes: usize,
    pub junctions: usize,
    pub tanks: usize,
    pub reservoirs: usize,
    pub pipes: usize,
    pub unsupported_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicSummary {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTransport {
    pub arrival_minutes: Option<f64>,
    pub chlorine: f64,
    pub reaction_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub injection_nodes: BTreeSet<String>,
    pub decay: DecayParams,
    pub detection_limit: f64,
    pub nodes: BTreeMap<String, NodeTransport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub timestamps: usize,
    pub records: usize,
    pub gap_filled: bool,
    pub kriged_values: usize,
    pub drawn_values: usize,
    pub contracts_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSummary {
    pub contaminated: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoMeta {
    pub scenarios: usize,
    pub seed: u64,
    pub candidates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds per stage, in execution order.
    pub stages: Vec<(Stage, f64)>,
    pub total_seconds: f64,
}

impl Timing {
    pub fn stage(&self, s: Stage) -> Option<f64> {
        self.stages.iter().find(|(x, _)| *x == s).map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub network: NetworkSummary,
    pub completeness: CompletenessReport,
    pub data: DataSummary,
    pub hydraulics: HydraulicSummary,
    pub transport: TransportSummary,
    pub contamination: Option<ContaminationSummary>,
    pub scores: Vec<NodeScore>,
    pub candidates: Vec<String>,
    pub effective_cutoff: f64,
    pub placement: PlacementResult,
    pub pareto_meta: Option<ParetoMeta>,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl RunResult {
    /// Pretty JSON with timing zeroed, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.timing = Timing::default();
        serde_json::to_string_pretty(&copy).expect("serializable")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn scores_csv(&self) -> String {
        scores_csv(&self.scores)
    }
}

struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<(Stage, f64)>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self { start: now, last: now, stages: Vec::new() }
    }

    fn lap(&mut self, s: Stage) {
        let now = Instant::now();
        self.stages.push((s, (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

fn default_injection(net: &Network) -> BTreeSet<String> {
    let pick = |k: NodeKind| net.nodes.iter().filter(|n| n.kind == k).map(|n| n.id.clone()).collect::<BTreeSet<_>>();
    let tanks = pick(NodeKind::Tank);
    if tanks.is_empty() {
        pick(NodeKind::Reservoir)
    } else {
        tanks
    }
}

/// Reads the files named in `config` and runs.
pub fn run_from_config(config: &RunConfig) -> Result<RunResult, RunError> {
    let inputs = RunInputs::from_config(config)?;
    run(config, &inputs)
}

/// Runs the whole pipeline.
pub fn run(config: &RunConfig, inputs: &RunInputs) -> Result<RunResult, RunError> {
    let mut clock = Clock::new();
    let Prepared {
        net,
        summary,
        flows,
        graph,
        injection,
        decay,
        transport,
        reaction_hours,
        dataset,
        completeness,
        data,
        contamination,
        models,
        mut warnings,
    } = prepare(config, inputs, &mut clock)?;


    let series = evaluate_models(&dataset, &models)?;
    clock.lap(Stage::Models);

    let timestamps = dataset.timestamps().len();
    let events = detect_events(&series, &config.thresholds);
    let weights: BTreeMap<Family, f64> =
        models.keys().map(|f| (f.clone(), config.weights[f])).collect();
    let contracts = contracts_table(&dataset, inputs)?;
    let mut scores = score_nodes(&events, timestamps, &weights);
    for s in &mut scores {
        let i = net.node_index(&s.node).expect("scored nodes come from the network");
        s.detection_time = transport.arrival_time[i].is_finite().then_some(transport.arrival_time[i]);
        s.contracts = contracts.get(&s.node).copied().unwrap_or(0.0);
    }
    let (candidates, effective_cutoff) = match filter_candidates(&scores, config.cutoff) {
        Ok(c) => (c, config.cutoff),
        Err(e) => {
            warnings.push(format!("{e}; using every node as a candidate"));
            (filter_candidates(&scores, 0.0).map_err(at(Stage::Scoring))?, 0.0)
        }
    };
    clock.lap(Stage::Scoring);

    let by_node: BTreeMap<&str, &NodeScore> = scores.iter().map(|s| (s.node.as_str(), s)).collect();
    let cand_scores: Vec<&NodeScore> = candidates.iter().map(|c| by_node[c.as_str()]).collect();
    let per_objective = config
        .objectives
        .iter()
        .map(|&o| {
            place_separable(&cand_scores, o, config.sensor_count, data.contracts_available)
                .map(|sel| (o, sel))
                .map_err(at(Stage::Placement))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    let consensus = consensus(&per_objective);
    clock.lap(Stage::Placement);

    let (pareto, pareto_meta) = if config.pareto.enabled {
        let scenarios: Vec<TransportResult> = (0..config.pareto.scenarios)
            .into_par_iter()
            .map(|s| {
                let inj = randomize_injection(&net, 1, config.pareto.seed.wrapping_add(s as u64))?;
                propagate_on(&net, &graph, &inj, decay, config.detection_limit)
            })
            .collect::<Result<_, _>>()
            .map_err(at(Stage::Pareto))?;
        let m = ArrivalMatrix::new(&scenarios, &candidates, |id| net.node_index(id)).map_err(at(Stage::Pareto))?;
        let points = pareto_sweep(&m, &config.pareto.k_values).map_err(at(Stage::Pareto))?;
        let meta = ParetoMeta { scenarios: config.pareto.scenarios, seed: config.pareto.seed, candidates: candidates.len() };
        (points, Some(meta))
    } else {
        (Vec::new(), None)
    };
    clock.lap(Stage::Pareto);

    let transport_summary = TransportSummary {
        injection_nodes: injection,
        decay,
        detection_limit: config.detection_limit,
        nodes: net
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let a = transport.arrival_time[i];
                (
                    n.id.clone(),
                    NodeTransport { arrival_minutes: a.is_finite().then_some(a), chlorine: transport.chlorine[i], reaction_hours: reaction_hours[i] },
                )
            })
            .collect(),
    };
    let mut result = RunResult {
        config: config.clone(),
        network: summary,
        completeness,
        data,
        hydraulics: HydraulicSummary { iterations: flows.iterations, residual: flows.residual },
        transport: transport_summary,
        contamination,
        scores,
        candidates,
        effective_cutoff,
        placement: PlacementResult { per_objective, consensus, pareto },
        pareto_meta,
        warnings,
        timing: Timing::default(),
    };
    let _ = result.deterministic_json();
    clock.lap(Stage::Serialization);
    result.timing = Timing { stages: clock.stages, total_seconds: clock.start.elapsed().as_secs_f64() };
    Ok(result)
}

struct Prepared {
    net: Network,
    summary: NetworkSummary,
    flows: FlowSolution,
    graph: FlowGraph,
    injection: BTreeSet<String>,
    decay: DecayParams,
    transport: TransportResult,
    reaction_hours: Vec<f64>,
    dataset: EnvDataset,
    completeness: CompletenessReport,
    data: DataSummary,
    contamination: Option<ContaminationSummary>,
    models: BTreeMap<Family, DbpModel>,
    warnings: Vec<String>,
}

fn prepare(config: &RunConfig, inputs: &RunInputs, clock: &mut Clock) -> Result<Prepared, RunError> {
    let models = config.validate()?;
    let mut warnings = Vec::new();

    let net = parse_inp(&inputs.network).map_err(at(Stage::Network))?;
    for d in validate_network(&net) {
        warnings.push(format!("network: {d}"));
    }
    let summary = NetworkSummary {
        title: net.title.clone(),
        nodes: net.nodes.len(),
        junctions: net.junction_count(),
        tanks: net.nodes.iter().filter(|n| n.kind == NodeKind::Tank).count(),
        reservoirs: net.nodes.iter().filter(|n| n.kind == NodeKind::Reservoir).count(),
        pipes: net.pipes.len(),
        unsupported_elements: net.unsupported_elements.len(),
    };
    clock.lap(Stage::Network);

    let flows = solve_flows(&net, DEFAULT_TOLERANCE).map_err(at(Stage::Hydraulics))?;
    clock.lap(Stage::Hydraulics);

    let graph = FlowGraph::build(&net, &flows).map_err(at(Stage::Transport))?;
    let injection = match &config.injection {
        Injection::Sources => default_injection(&net),
        Injection::Nodes { nodes } => nodes.iter().cloned().collect(),
        Injection::Randomized { count, seed } => {
            randomize_injection(&net, *count, *seed).map_err(at(Stage::Transport))?
        }
    };
    if injection.is_empty() {
        return Err(RunError::Stage { stage: Stage::Transport, message: "no injection nodes".into() });
    }
    let decay = DecayParams {
        c0: config.chlorine_dose,
        kb: config.bulk_decay_per_hour.unwrap_or_else(|| net.bulk_decay_per_hour()),
        order: net.reaction_order,
    };
    let transport =
        propagate_on(&net, &graph, &injection, decay, config.detection_limit).map_err(at(Stage::Transport))?;
    let reaction_hours: Vec<f64> = (0..net.nodes.len())
        .map(|i| config.reaction_time_hours.unwrap_or(transport.capped_arrival(i) / 60.0))
        .collect();
    clock.lap(Stage::Transport);

    let (dataset, completeness, data) = prepare_data(config, inputs, &net, &transport, &reaction_hours, &mut warnings)?;
    clock.lap(Stage::Data);

    let (dataset, contamination) = match &config.contamination {
        None => (dataset, None),
        Some(c) => {
            let target = ContaminationTarget {
                models: &models,
                thresholds: &config.thresholds,
                bounds: PrecursorBounds::default(),
                min_exceedance: 0.9,
            };
            let out =
                contaminate(&dataset, &net, c.fraction, &c.families, c.seed, &target).map_err(at(Stage::Contamination))?;
            if !out.skipped.is_empty() {
                warnings.push(format!(
                    "contamination skipped {} node(s) with zero reaction time: {}",
                    out.skipped.len(),
                    out.skipped.join(", ")
                ));
            }
            clock.lap(Stage::Contamination);
            (out.dataset, Some(ContaminationSummary { contaminated: out.contaminated, skipped: out.skipped }))
        }
    };
    Ok(Prepared {
        net,
        summary,
        flows,
        graph,
        injection,
        decay,
        transport,
        reaction_hours,
        dataset,
        completeness,
        data,
        contamination,
        models,
        warnings,
    })
}

/// Output of [`scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dataset: EnvDataset,
    pub contamination: ContaminationSummary,
    pub warnings: Vec<String>,
}

/// Runs the data stages with `config.contamination` set and returns the
/// contaminated dataset without scoring it.
pub fn scenario(config: &RunConfig, inputs: &RunInputs) -> Result<Scenario, RunError> {
    if config.contamination.is_none() {
        return Err(RunError::Config("scenario needs a contamination section".into()));
    }
    let p = prepare(config, inputs, &mut Clock::new())?;
    Ok(Scenario {
        dataset: p.dataset,
        contamination: p.contamination.expect("configured"),
        warnings: p.warnings,
    })
}


fn prepare_data(
    config: &RunConfig,
    inputs: &RunInputs,
    net: &Network,
    transport: &TransportResult,
    reaction_hours: &[f64],
    warnings: &mut Vec<String>,
) -> Result<(EnvDataset, CompletenessReport, DataSummary), RunError> {
    let ds = match &inputs.env_data {
        Some(text) => read_env_csv(text).map_err(at(Stage::Data))?,
        None => EnvDataset::default(),
    };
    let report = assess_completeness(&ds, net, &config.completeness).map_err(at(Stage::Data))?;
    let contracts_available = inputs.contracts.is_some() || ds.records.iter().any(|r| r.contracts.is_some());
    if config.objectives.contains(&Objective::Contracts) && !contracts_available {
        return Err(RunError::Stage {
            stage: Stage::Placement,
            message: "objective contracts needs a contracts file or a Contracts column".into(),
        });
    }
    let (mut ds, gap_filled, kriged, drawn) = if ds.is_filled(net, false) {
        (ds, false, 0, 0)
    } else {
        let opts = GapFillOptions {
            horizon_hours: config.horizon_hours,
            interval_minutes: config.interval_minutes,
            seed: config.seed,
            default_ranges: template_ranges(),
            use_kriging: config.kriging,
            variogram: config.variogram,
        };
        let out = gap_fill(&ds, net, &opts).map_err(at(Stage::Data))?;
        warnings.extend(out.warnings.into_iter().map(|w| format!("data: {w}")));
        (out.dataset, true, out.kriged_values, out.drawn_values)
    };
    fill_chlorine(&mut ds, net, transport);
    let hours: BTreeMap<String, f64> =
        net.nodes.iter().zip(reaction_hours).map(|(n, &h)| (n.id.clone(), h)).collect();
    attach_reaction_time(&mut ds, &hours);
    if transport.arrival_time.iter().any(|a| !a.is_finite()) && config.reaction_time_hours.is_none() {
        let n = transport.arrival_time.iter().filter(|a| !a.is_finite()).count();
        warnings.push(format!(
            "transport: {n} node(s) undetected within the horizon use {} h reaction time",
            HORIZON_MINUTES / 60.0
        ));
    }
    let summary = DataSummary {
        timestamps: ds.timestamps().len(),
        records: ds.records.len(),
        gap_filled,
        kriged_values: kriged,
        drawn_values: drawn,
        contracts_available,
    };
    Ok((ds, report, summary))
}

fn contracts_table(ds: &EnvDataset, inputs: &RunInputs) -> Result<BTreeMap<String, f64>, RunError> {
    let mut c = ds.contracts();
    if let Some(text) = &inputs.contracts {
        c.extend(read_contracts_csv(text).map_err(at(Stage::Data))?);
    }
    Ok(c)
}

/// Model output per family, node and timestamp.
pub fn evaluate_models(ds: &EnvDataset, models: &BTreeMap<Family, DbpModel>) -> Result<Series, RunError> {
    let mut series: Series = BTreeMap::new();
    for (family, model) in models {
        let values: Vec<f64> = ds
            .records
            .par_iter()
            .map(|r| {
                let time = r.extras.get(TIME_VAR).copied().unwrap_or(0.0);
                model.evaluate(r, time).map_err(|e| RunError::Stage {
                    stage: Stage::Models,
                    message: format!("{family} at node {} ({}): {e}", r.node, r.timestamp),
                })
            })
            .collect::<Result<_, _>>()?;
        let per_node = series.entry(family.clone()).or_default();
        for (r, v) in ds.records.iter().zip(values) {
            per_node.entry(r.node.clone()).or_default().push(v);
        }
    }
    Ok(series)
}

/// Writes `config.json`, `result.json`, `scores.csv` and `network.json`
/// into a fresh directory.
pub fn write_run_dir(dir: &Path, result: &RunResult, network_text: &str) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io { path: dir.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(io)?;
    let net = parse_inp(network_text).map_err(at(Stage::Network))?;
    let files = [
        ("config.json", serde_json::to_string_pretty(&result.config).expect("serializable")),
        ("result.json", result.to_json()),
        ("scores.csv", result.scores_csv()),
        ("network.json", serde_json::to_string_pretty(&net.geometry()).expect("serializable")),
    ];
    for (name, body) in files {
        std::fs::write(dir.join(name), body).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DEMO_INP;

    #[test]
    fn config_needs_a_mandatory_objective() {
        let c = RunConfig { objectives: BTreeSet::from([Objective::Contracts]), ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(RunError::Config(_))));
        let inputs = RunInputs { network: DEMO_INP.into(), ..RunInputs::default() };
        assert!(matches!(run(&c, &inputs), Err(RunError::Config(_))));
    }

    #[test]
    fn config_bounds() {
        for c in [
            RunConfig { sensor_count: 0, ..RunConfig::default() },
            RunConfig { sensor_count: 1001, ..RunConfig::default() },
            RunConfig { cutoff: 1.5, ..RunConfig::default() },
            RunConfig { weights: BTreeMap::from([(Family::Thm, 6.0), (Family::Haa, 1.0)]), ..RunConfig::default() },
            RunConfig { models: BTreeMap::from([(Family::Han, "hong_hans".into())]), ..RunConfig::default() },
            RunConfig { models: BTreeMap::from([(Family::Thm, "TOC^^2".into())]), ..RunConfig::default() },
        ] {
            assert!(matches!(c.validate(), Err(RunError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"sensor_count": 3, "injection": {"mode": "nodes", "nodes": ["1_1000"]}}"#).unwrap();
        assert_eq!(c.sensor_count, 3);
        assert_eq!(c.cutoff, 0.9);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sensor_cuont": 3}"#).is_err());
    }

    #[test]
    fn demo_smoke() {
        let c = RunConfig { sensor_count: 2, ..RunConfig::default() };
        let inputs = RunInputs {
            network: DEMO_INP.into(),
            env_data: Some(crate::envdata::env_template()),
            contracts: None,
        };
        let r = run(&c, &inputs).unwrap();
        assert_eq!(r.placement.per_objective.len(), 2);
        assert!(r.placement.per_objective.values().all(|v| v.len() == 2));
        assert_eq!(r.data.timestamps, 1);
        assert!(!r.data.gap_filled);
        assert_eq!(r.deterministic_json(), run(&c, &inputs).unwrap().deterministic_json());
    }

    #[test]
    fn missing_data_is_synthesized_over_the_horizon() {
        let c = RunConfig { pareto: ParetoConfig { enabled: false, ..ParetoConfig::default() }, ..RunConfig::default() };
        let inputs = RunInputs { network: DEMO_INP.into(), ..RunInputs::default() };
        let r = run(&c, &inputs).unwrap();
        assert!(r.data.gap_filled);
        assert_eq!(r.data.timestamps, 168);
        assert_eq!(r.data.records, 168 * 10);
        assert!(r.placement.pareto.is_empty());
    }

    #[test]
    fn scenario_marks_central_nodes() {
        let c = RunConfig {
            contamination: Some(ContaminationConfig { fraction: 0.2, families: BTreeSet::from([Family::Thm]), seed: 1 }),
            ..RunConfig::default()
        };
        let inputs = RunInputs { network: DEMO_INP.into(), ..RunInputs::default() };
        let s = scenario(&c, &inputs).unwrap();
        assert_eq!(s.contamination.contaminated.len() + s.contamination.skipped.len(), 2);
        assert!(matches!(scenario(&RunConfig::default(), &inputs), Err(RunError::Config(_))));
    }
}
