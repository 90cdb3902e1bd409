use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dbp_core::dbp::Family;
use dbp_core::envdata::{contracts_template, env_template, write_env_csv};
use dbp_core::network::write_inp;
use dbp_core::pipeline::{run, scenario, write_run_dir, ContaminationConfig, RunConfig, RunInputs};
use dbp_core::placement::Objective;
use dbp_core::synth;
use dbp_service::AppState;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "dbp", version, about = "Sensor placement for disinfection by-product monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    contracts: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a run directory.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated objectives.
        #[arg(long, value_delimiter = ',')]
        objectives: Vec<Objective>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        no_pareto: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
    },
    /// Contaminate the most central nodes and write the dataset.
    Scenario {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        fraction: f64,
        /// Comma-separated families, e.g. thm,haa.
        #[arg(long, value_delimiter = ',', required = true)]
        families: Vec<Family>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an example input file.
    Template { kind: TemplateKind },
    /// Write a bundled or synthetic network.
    Generate {
        kind: NetworkKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateKind {
    Env,
    Contracts,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetworkKind {
    Demo,
    CaseStudy,
    Large,
}

fn load(inputs: &Inputs) -> Result<(RunConfig, RunInputs), String> {
    let mut config = match &inputs.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = &inputs.network {
        config.network_path = Some(p.clone());
    }
    if let Some(p) = &inputs.env {
        config.env_data_path = Some(p.clone());
    }
    if let Some(p) = &inputs.contracts {
        config.contracts_path = Some(p.clone());
    }
    if let Some(s) = inputs.seed {
        config.seed = s;
    }
    let files = RunInputs::from_config(&config).map_err(|e| e.to_string())?;
    Ok((config, files))
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run { inputs, objectives, k, cutoff, no_pareto, out } => {
            let (mut config, files) = load(&inputs)?;
            if !objectives.is_empty() {
                config.objectives = objectives.into_iter().collect();
            }
            if let Some(k) = k {
                config.sensor_count = k;
            }
            if let Some(c) = cutoff {
                config.cutoff = c;
            }
            if no_pareto {
                config.pareto.enabled = false;
            }
            let result = run(&config, &files).map_err(|e| e.to_string())?;
            write_run_dir(&out, &result, &files.network).map_err(|e| e.to_string())?;
            for w in &result.warnings {
                tracing::warn!("{w}");
            }
            for (objective, selected) in &result.placement.per_objective {
                let nodes: Vec<&str> = selected.iter().map(|s| s.node.as_str()).collect();
                println!("{objective}: {}", nodes.join(" "));
            }
            for p in &result.placement.pareto {
                println!("pareto k={} expected={:.1} min", p.k, p.expected_minutes);
            }
            println!("wrote {}", out.display());
        }
        Command::Serve { bind, runs_dir } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(dbp_service::serve(&bind, AppState::new(runs_dir))).map_err(|e| e.to_string())?;
        }
        Command::Scenario { inputs, fraction, families, out } => {
            let (mut config, files) = load(&inputs)?;
            config.contamination = Some(ContaminationConfig {
                fraction,
                families: families.into_iter().collect::<BTreeSet<_>>(),
                seed: config.seed,
            });
            let s = scenario(&config, &files).map_err(|e| e.to_string())?;
            for w in &s.warnings {
                tracing::warn!("{w}");
            }
            std::fs::write(&out, write_env_csv(&s.dataset)).map_err(|e| format!("{}: {e}", out.display()))?;
            println!("contaminated: {}", s.contamination.contaminated.join(" "));
            if !s.contamination.skipped.is_empty() {
                println!("skipped: {}", s.contamination.skipped.join(" "));
            }
        }
        Command::Template { kind } => match kind {
            TemplateKind::Env => print!("{}", env_template()),
            TemplateKind::Contracts => print!("{}", contracts_template()),
        },
        Command::Generate { kind, out } => {
            let text = match kind {
                NetworkKind::Demo => synth::DEMO_INP.to_string(),
                NetworkKind::CaseStudy => write_inp(&synth::case_study_network()),
                NetworkKind::Large => write_inp(&synth::large_network()),
            };
            std::fs::write(&out, text).map_err(|e| format!("{}: {e}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("DBP_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
