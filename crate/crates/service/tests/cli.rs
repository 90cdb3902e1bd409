use std::process::Command;

use dbp_core::envdata::{read_env_csv, ENV_COLUMNS};
use dbp_core::pipeline::RunResult;

fn dbp() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dbp"));
    c.env("DBP_LOG", "warn");
    c
}

#[test]
fn run_writes_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("demo.inp");
    assert!(dbp().args(["generate", "demo", "--out"]).arg(&net).status().unwrap().success());
    let env = dir.path().join("env.csv");
    let out = dbp().args(["template", "env"]).output().unwrap();
    std::fs::write(&env, &out.stdout).unwrap();

    let run_dir = dir.path().join("run");
    let out = dbp()
        .args(["run", "--k", "2", "--objectives", "time_of_detection,normalized_score,contracts", "--network"])
        .arg(&net)
        .arg("--env")
        .arg(&env)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("contracts: "));
    for f in ["config.json", "result.json", "scores.csv", "network.json"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let r: RunResult = serde_json::from_str(&std::fs::read_to_string(run_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(r.config.sensor_count, 2);
    assert_eq!(r.placement.per_objective.len(), 3);
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("demo.inp");
    assert!(dbp().args(["generate", "demo", "--out"]).arg(&net).status().unwrap().success());
    let out = dbp()
        .args(["run", "--objectives", "contracts", "--network"])
        .arg(&net)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mandatory"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn scenario_writes_contaminated_data() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("demo.inp");
    assert!(dbp().args(["generate", "demo", "--out"]).arg(&net).status().unwrap().success());
    let csv = dir.path().join("scenario.csv");
    let out = dbp()
        .args(["scenario", "--fraction", "0.3", "--families", "thm,haa", "--network"])
        .arg(&net)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(&ENV_COLUMNS.join(",")));
    let ds = read_env_csv(&text).unwrap();
    assert_eq!(ds.records.len(), 168 * 10);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("contaminated: "));
}
