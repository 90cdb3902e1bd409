use std::collections::BTreeSet;

use dbp_core::envdata::{contracts_template, env_template, write_env_csv};
use dbp_core::network::write_inp;
use dbp_core::pipeline::{run, write_run_dir, ContaminationConfig, Injection, RunConfig, RunInputs, RunResult, Stage};
use dbp_core::placement::Objective;
use dbp_core::dbp::Family;
use dbp_core::synth::{baseline_dataset, dead_end_network, DEMO_INP};

fn small_case() -> RunInputs {
    let net = dead_end_network(40, 2, 8);
    RunInputs { network: write_inp(&net), env_data: Some(write_env_csv(&baseline_dataset(&net, 24, 3))), contracts: None }
}

fn quick() -> RunConfig {
    let mut c = RunConfig { objectives: Objective::ALL.into_iter().collect(), ..RunConfig::default() };
    c.pareto.scenarios = 20;
    c
}

#[test]
fn reruns_are_byte_identical() {
    let inputs = small_case();
    let a = run(&quick(), &inputs).unwrap();
    let b = run(&quick(), &inputs).unwrap();
    assert_eq!(a.deterministic_json(), b.deterministic_json());
}

#[test]
fn echoed_config_reproduces_the_result() {
    let inputs = small_case();
    let cfg = RunConfig {
        injection: Injection::Randomized { count: 2, seed: 5 },
        contamination: Some(ContaminationConfig { fraction: 0.2, families: BTreeSet::from([Family::Thm]), seed: 9 }),
        ..quick()
    };
    let first = run(&cfg, &inputs).unwrap();
    let echoed: RunResult = serde_json::from_str(&first.to_json()).unwrap();
    let again = run(&echoed.config, &inputs).unwrap();
    assert_eq!(first.deterministic_json(), again.deterministic_json());
}

#[test]
fn baseline_without_events_falls_back_to_all_nodes() {
    let inputs = small_case();
    let r = run(&quick(), &inputs).unwrap();
    assert_eq!(r.effective_cutoff, 0.0);
    assert_eq!(r.candidates.len(), r.network.nodes);
    assert!(r.warnings.iter().any(|w| w.contains("every node")));
}

#[test]
fn timing_covers_every_stage() {
    let r = run(&quick(), &small_case()).unwrap();
    let stages: Vec<Stage> = r.timing.stages.iter().map(|s| s.0).collect();
    for s in [Stage::Network, Stage::Hydraulics, Stage::Transport, Stage::Data, Stage::Models, Stage::Scoring, Stage::Placement, Stage::Pareto, Stage::Serialization] {
        assert!(stages.contains(&s), "{s}");
    }
    let sum: f64 = r.timing.stages.iter().map(|s| s.1).sum();
    assert!(r.timing.total_seconds >= sum - 1e-6);
}

#[test]
fn run_directory_layout() {
    let dir = std::env::temp_dir().join(format!("dbp-run-{}", std::process::id()));
    let inputs = RunInputs {
        network: DEMO_INP.into(),
        env_data: Some(env_template()),
        contracts: Some(contracts_template()),
    };
    let r = run(&RunConfig { sensor_count: 3, ..RunConfig::default() }, &inputs).unwrap();
    write_run_dir(&dir, &r, &inputs.network).unwrap();
    let config: RunConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config, r.config);
    let scores = std::fs::read_to_string(dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 11);
    let geometry: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("network.json")).unwrap()).unwrap();
    assert_eq!(geometry["edges"].as_array().unwrap().len(), 10);
    let contracts = r.scores.iter().find(|s| s.node == "1_1003").unwrap().contracts;
    assert_eq!(contracts, 12.5);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn contracts_objective_needs_contract_data() {
    let mut inputs = small_case();
    inputs.env_data = None;
    let r = run(&quick(), &inputs);
    assert!(matches!(r, Err(dbp_core::pipeline::RunError::Stage { stage: Stage::Placement, .. })), "{r:?}");
}
