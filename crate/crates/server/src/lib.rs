//! HTTP front end for the sizer.
//!
//! Routes, all under `/api/v1`:
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | POST | `/size` | sizing request JSON; returns the result |
//! | GET | `/tiers` | configured tiers |
//! | POST | `/calibrate?name=NAME&reference=TIER` | samples CSV; returns coefficients |
//! | GET | `/runs/{run_id}` | stored run record |
//! | GET | `/runs/{run_id}/report?format=markdown\|dot\|csv[&tier=NAME]` | report download |
//!
//! Runs and calibrated profiles are kept in a data directory (see [`store`]).
//! When a UI directory is configured its files are served for every other path.

pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::{json, Value};
use sizer_core::perfmodel::{fit_coefficients, read_samples_csv};
use sizer_core::report::{
    emit_infrastructure_diagram, emit_performance_curve, emit_summary_report, emit_topology_graph,
};
use sizer_core::{
    compare_tiers, resolve_tier, size, validate_request, CoefficientsRef, HardwareTier, ModelCoefficients, ModelError,
    RunStamp, SizingError, SizingRequest, ValidationError,
};
use tower_http::services::ServeDir;

pub use store::{new_run_id, ProfileRegistry, RunRecord, RunStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(PathBuf, serde_json::Error),
    #[error("tier file {0} lists no tiers")]
    EmptyTiers(PathBuf),
    #[error("invalid tier configuration: {0}")]
    InvalidTiers(String),
    #[error("invalid coefficients: {0}")]
    Coefficients(#[from] ModelError),
    #[error("data directory: {0}")]
    Store(#[from] StoreError),
}

/// Server settings; every field but `listen` and `data_dir` is optional.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub tiers_file: Option<PathBuf>,
    pub coeffs_file: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| ConfigError::Parse(path.to_path_buf(), e))
}

/// Reads a tier list file. An empty list is a configuration error.
pub fn load_tiers(path: &Path) -> Result<Vec<HardwareTier>, ConfigError> {
    let tiers: Vec<HardwareTier> = read_json(path)?;
    if tiers.is_empty() {
        return Err(ConfigError::EmptyTiers(path.to_path_buf()));
    }
    let problems: Vec<String> = tiers.iter().flat_map(HardwareTier::violations).map(|e| e.to_string()).collect();
    if !problems.is_empty() {
        return Err(ConfigError::InvalidTiers(problems.join("; ")));
    }
    Ok(tiers)
}

pub fn load_coefficients(path: &Path) -> Result<ModelCoefficients, ConfigError> {
    let coeffs: ModelCoefficients = read_json(path)?;
    coeffs.check()?;
    Ok(coeffs)
}

/// Shared state behind every handler.
pub struct AppState {
    pub tiers: Vec<HardwareTier>,
    pub coefficients: ModelCoefficients,
    pub runs: RunStore,
    pub profiles: ProfileRegistry,
}

impl AppState {
    pub fn new(
        data_dir: &Path,
        tiers: Vec<HardwareTier>,
        coefficients: ModelCoefficients,
    ) -> Result<Self, ConfigError> {
        if resolve_tier(&coefficients.reference_tier, &tiers).is_none() {
            return Err(ModelError::UnknownTier(coefficients.reference_tier.clone()).into());
        }
        Ok(Self { tiers, coefficients, runs: RunStore::open(data_dir)?, profiles: ProfileRegistry::open(data_dir)? })
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self, ConfigError> {
        let tiers = match &config.tiers_file {
            Some(path) => load_tiers(path)?,
            None => HardwareTier::standard(),
        };
        let coefficients = match &config.coeffs_file {
            Some(path) => load_coefficients(path)?,
            None => ModelCoefficients::default(),
        };
        Self::new(&config.data_dir, tiers, coefficients)
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/v1/size", post(post_size))
        .route("/api/v1/tiers", get(get_tiers))
        .route("/api/v1/calibrate", post(post_calibrate))
        .route("/api/v1/runs/{run_id}", get(get_run))
        .route("/api/v1/runs/{run_id}/report", get(get_report))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot serve on {0}: {1}")]
    Io(SocketAddr, std::io::Error),
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let app = router(state, config.ui_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.listen).await.map_err(|e| ServeError::Io(config.listen, e))?;
    tracing::info!(addr = %config.listen, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServeError::Io(config.listen, e))
}

fn error_body(status: StatusCode, errors: Vec<Value>) -> Response {
    (status, Json(json!({ "errors": errors }))).into_response()
}

fn tagged(kind: &str, message: impl ToString) -> Value {
    json!({ kind: message.to_string() })
}

fn validation_errors(errors: &[ValidationError]) -> Vec<Value> {
    errors.iter().map(|e| serde_json::to_value(e).expect("validation errors serialize")).collect()
}

fn store_failure(e: StoreError) -> Response {
    tracing::error!(error = %e, "store failure");
    error_body(StatusCode::INTERNAL_SERVER_ERROR, vec![tagged("store_error", e)])
}

fn resolve_coefficients(state: &AppState, request: &SizingRequest) -> Result<ModelCoefficients, ValidationError> {
    match &request.coefficients {
        None => Ok(state.coefficients.clone()),
        Some(CoefficientsRef::Inline(c)) => Ok(c.clone()),
        Some(CoefficientsRef::Named(name)) => {
            state.profiles.get(name).ok_or_else(|| ValidationError::UnknownCoefficients(name.clone()))
        }
    }
}

async fn post_size(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: SizingRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, vec![tagged("malformed_json", e)]),
    };
    let coeffs = match resolve_coefficients(&state, &request) {
        Ok(c) => c,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, validation_errors(&[e])),
    };
    let request = match validate_request(&request, &coeffs, &state.tiers) {
        Ok(r) => r,
        Err(errors) => return error_body(StatusCode::BAD_REQUEST, validation_errors(&errors)),
    };

    let now = Utc::now();
    let run_id = new_run_id(now);
    let result = match size(&request, &coeffs, RunStamp::new(run_id.clone(), now)) {
        Ok(r) => r,
        Err(SizingError::Invalid(errors)) => return error_body(StatusCode::BAD_REQUEST, validation_errors(&errors)),
        Err(SizingError::Model(e)) => return error_body(StatusCode::BAD_REQUEST, vec![tagged(e.kind(), e)]),
    };
    let record = RunRecord { run_id, request, result, created_at: now };
    if let Err(e) = state.runs.put(&record) {
        return store_failure(e);
    }
    let status = if record.result.any_feasible() { StatusCode::OK } else { StatusCode::UNPROCESSABLE_ENTITY };
    (status, Json(record.result)).into_response()
}

async fn get_tiers(State(state): State<Arc<AppState>>) -> Json<Vec<HardwareTier>> {
    Json(state.tiers.clone())
}

#[derive(Debug, Deserialize)]
struct CalibrateQuery {
    name: Option<String>,
    reference: Option<String>,
}

async fn post_calibrate(
    State(state): State<Arc<AppState>>,
    Query(query): Query<CalibrateQuery>,
    body: Bytes,
) -> Response {
    if let Some(name) = &query.name {
        if !store::is_valid_key(name) {
            return error_body(StatusCode::BAD_REQUEST, vec![tagged("invalid_name", name)]);
        }
        if state.profiles.contains(name) {
            return error_body(StatusCode::CONFLICT, vec![tagged("profile_exists", name)]);
        }
    }
    let reference_name = query.reference.as_deref().unwrap_or(&state.coefficients.reference_tier);
    let Some(reference) = resolve_tier(reference_name, &state.tiers) else {
        return error_body(StatusCode::BAD_REQUEST, vec![tagged("unknown_tier", reference_name)]);
    };
    let fitted = read_samples_csv(body.as_ref())
        .and_then(|samples| fit_coefficients(&samples, &reference, &state.tiers, Some(&state.coefficients)));
    let coeffs = match fitted {
        Ok(c) => c,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, vec![tagged(e.kind(), e)]),
    };
    if let Some(name) = &query.name {
        match state.profiles.insert(name, &coeffs) {
            Ok(()) => {}
            Err(StoreError::Exists(_)) => {
                return error_body(StatusCode::CONFLICT, vec![tagged("profile_exists", name)]);
            }
            Err(e) => return store_failure(e),
        }
    }
    Json(coeffs).into_response()
}

fn not_found(run_id: &str) -> Response {
    error_body(StatusCode::NOT_FOUND, vec![tagged("run_not_found", run_id)])
}

async fn get_run(State(state): State<Arc<AppState>>, UrlPath(run_id): UrlPath<String>) -> Response {
    match state.runs.get_raw(&run_id) {
        Ok(Some(bytes)) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Ok(None) => not_found(&run_id),
        Err(e) => store_failure(e),
    }
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
    tier: Option<String>,
}

fn download(content_type: &'static str, filename: String, body: String) -> Response {
    let disposition = HeaderValue::from_str(&format!("attachment; filename=\"{filename}\""))
        .unwrap_or_else(|_| HeaderValue::from_static("attachment"));
    ([(header::CONTENT_TYPE, HeaderValue::from_static(content_type)), (header::CONTENT_DISPOSITION, disposition)], body)
        .into_response()
}

/// `markdown` serves the summary report. `dot` serves the topology of `tier`
/// when given, else the infrastructure diagram. `csv` serves the performance
/// curve of `tier`, defaulting to the top-ranked tier.
async fn get_report(
    State(state): State<Arc<AppState>>,
    UrlPath(run_id): UrlPath<String>,
    Query(query): Query<ReportQuery>,
) -> Response {
    let format = query.format.as_deref().unwrap_or("markdown");
    if !matches!(format, "markdown" | "dot" | "csv") {
        return error_body(StatusCode::BAD_REQUEST, vec![tagged("unknown_format", format)]);
    }
    let record = match state.runs.get(&run_id) {
        Ok(Some(r)) => r,
        Ok(None) => return not_found(&run_id),
        Err(e) => return store_failure(e),
    };
    let result = &record.result;
    let tier_missing = |tier: &str| error_body(StatusCode::NOT_FOUND, vec![tagged("tier_not_found", tier)]);
    let no_feasible = || error_body(StatusCode::UNPROCESSABLE_ENTITY, vec![tagged("no_feasible_tier", &run_id)]);

    match (format, query.tier.as_deref()) {
        ("markdown", _) => {
            download("text/markdown; charset=utf-8", format!("{run_id}-report.md"), emit_summary_report(result))
        }
        ("dot", Some(tier)) => match result.per_tier.get(tier) {
            Some(topology) => {
                download("text/vnd.graphviz", format!("{run_id}-topology-{tier}.dot"), emit_topology_graph(topology))
            }
            None => tier_missing(tier),
        },
        ("dot", None) => match emit_infrastructure_diagram(result) {
            Ok(dot) => download("text/vnd.graphviz", format!("{run_id}-infrastructure.dot"), dot),
            Err(_) => no_feasible(),
        },
        (_, tier) => {
            let tier = match tier {
                Some(t) => t.to_string(),
                None => match compare_tiers(result) {
                    Ok(ranking) => ranking[0].clone(),
                    Err(_) => match result.curves.keys().next() {
                        Some(t) => t.clone(),
                        None => return no_feasible(),
                    },
                },
            };
            match result.curves.get(&tier) {
                Some(curve) => download(
                    "text/csv; charset=utf-8",
                    format!("{run_id}-curve-{tier}.csv"),
                    emit_performance_curve(curve, result.request_echo.packer.cpu_cap_pct),
                ),
                None => tier_missing(&tier),
            }
        }
    }
}
