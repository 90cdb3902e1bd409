//! HTTP JSON API over the run pipeline. Each run is persisted as a
//! directory under the runs root; the service keeps no other state.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dbp_core::envdata::{contracts_template, env_template};
use dbp_core::pipeline::{run, write_run_dir, RunConfig, RunError, RunInputs};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone)]
pub struct AppState {
    runs_dir: Arc<PathBuf>,
}

impl AppState {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        Self { runs_dir: Arc::new(runs_dir.into()) }
    }

    pub fn runs_dir(&self) -> &Path {
        &self.runs_dir
    }

    fn run_dir(&self, id: &str) -> Option<PathBuf> {
        let id = Uuid::parse_str(id).ok()?;
        let dir = self.runs_dir.join(id.to_string());
        dir.is_dir().then_some(dir)
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    /// Pipeline stage that failed, when known.
    pub stage: Option<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub warnings: Vec<String>,
}

fn error(status: StatusCode, e: ApiError) -> Response {
    (status, Json(e)).into_response()
}

fn bad_request(msg: impl Into<String>) -> Response {
    let msg = msg.into();
    error(StatusCode::BAD_REQUEST, ApiError { error: msg.clone(), stage: None, diagnostics: vec![msg] })
}

fn not_found(id: &str) -> Response {
    error(
        StatusCode::NOT_FOUND,
        ApiError { error: format!("unknown run id {id}"), stage: None, diagnostics: Vec::new() },
    )
}

fn internal(msg: impl Into<String>) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, ApiError { error: msg.into(), stage: None, diagnostics: Vec::new() })
}

fn run_error(e: RunError) -> Response {
    let stage = match &e {
        RunError::Stage { stage, .. } => Some(stage.to_string()),
        RunError::Config(_) => Some("config".to_string()),
        RunError::Io { .. } => None,
    };
    let diagnostics = match &e {
        RunError::Stage { message, .. } | RunError::Config(message) => message.lines().map(String::from).collect(),
        RunError::Io { message, .. } => vec![message.clone()],
    };
    let status = match e {
        RunError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    error(status, ApiError { error: e.to_string(), stage, diagnostics })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/scores", get(get_scores))
        .route("/network/{id}", get(get_network))
        .route("/templates/env", get(|| async { csv_response(env_template(), "env_template.csv") }))
        .route("/templates/contracts", get(|| async { csv_response(contracts_template(), "contracts_template.csv") }))
        .with_state(state)
}

fn csv_response(body: String, filename: &str) -> Response {
    (
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
        ],
        body,
    )
        .into_response()
}

fn json_file(path: &Path) -> Response {
    match std::fs::read_to_string(path) {
        Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => internal(format!("{}: {e}", path.display())),
    }
}

async fn create_run(State(state): State<AppState>, mut multipart: Multipart) -> Response {
    let mut inputs = RunInputs::default();
    let mut network = None;
    let mut config = RunConfig::default();
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return bad_request(format!("multipart: {e}")),
        };
        let name = field.name().unwrap_or_default().to_string();
        let text = match field.text().await {
            Ok(t) => t,
            Err(e) => return bad_request(format!("field {name}: {e}")),
        };
        match name.as_str() {
            "network" => network = Some(text),
            "env" => inputs.env_data = Some(text),
            "contracts" => inputs.contracts = Some(text),
            "config" => match serde_json::from_str(&text) {
                Ok(c) => config = c,
                Err(e) => return bad_request(format!("config: {e}")),
            },
            other => return bad_request(format!("unexpected field {other:?}")),
        }
    }
    let Some(network) = network else {
        return bad_request("missing field \"network\"");
    };
    inputs.network = network;

    let id = Uuid::new_v4().to_string();
    tracing::info!(run = %id, "run started");
    let dir = state.runs_dir.join(&id);
    let job = tokio::task::spawn_blocking(move || -> Result<Created, Response> {
        let result = run(&config, &inputs).map_err(run_error)?;
        std::fs::create_dir_all(dir.parent().expect("child of runs dir")).map_err(|e| internal(e.to_string()))?;
        std::fs::create_dir(&dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
        write_run_dir(&dir, &result, &inputs.network).map_err(run_error)?;
        save_inputs(&dir.join("inputs"), &inputs).map_err(|e| internal(e.to_string()))?;
        Ok(Created { id: dir.file_name().expect("named").to_string_lossy().into_owned(), warnings: result.warnings })
    });
    match job.await {
        Ok(Ok(created)) => {
            tracing::info!(run = %created.id, warnings = created.warnings.len(), "run finished");
            (StatusCode::CREATED, Json(created)).into_response()
        }
        Ok(Err(resp)) => {
            tracing::warn!(run = %id, status = %resp.status(), "run failed");
            resp
        }
        Err(e) => internal(format!("run task: {e}")),
    }
}

fn save_inputs(dir: &Path, inputs: &RunInputs) -> std::io::Result<()> {
    std::fs::create_dir(dir)?;
    std::fs::write(dir.join("network.inp"), &inputs.network)?;
    if let Some(t) = &inputs.env_data {
        std::fs::write(dir.join("env.csv"), t)?;
    }
    if let Some(t) = &inputs.contracts {
        std::fs::write(dir.join("contracts.csv"), t)?;
    }
    Ok(())
}

async fn get_run(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.run_dir(&id) {
        Some(dir) => json_file(&dir.join("result.json")),
        None => not_found(&id),
    }
}

async fn get_scores(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(dir) = state.run_dir(&id) else { return not_found(&id) };
    match std::fs::read_to_string(dir.join("scores.csv")) {
        Ok(body) => csv_response(body, "scores.csv"),
        Err(e) => internal(e.to_string()),
    }
}

async fn get_network(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.run_dir(&id) {
        Some(dir) => json_file(&dir.join("network.json")),
        None => not_found(&id),
    }
}

/// Serves until the process is stopped.
pub async fn serve(bind: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, runs = %state.runs_dir().display(), "listening");
    axum::serve(listener, router(state)).await
}
