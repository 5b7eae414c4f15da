use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sizer_core::perfmodel::{write_samples_csv, CalibrationSample};
use sizer_core::report::emit_summary_report;
use sizer_core::{HardwareTier, ModelCoefficients, RuntimeProfile, SizingRequest};
use sizer_server::{load_tiers, router, AppState, ConfigError, RunRecord};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    _dir: TempDir,
    app: Router,
}

fn harness_with(tiers: Vec<HardwareTier>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(dir.path(), tiers, ModelCoefficients::default()).unwrap();
    Harness { app: router(Arc::new(state), None), _dir: dir }
}

fn harness() -> Harness {
    harness_with(HardwareTier::standard())
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    disposition: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let (parts, body) = app.clone().oneshot(req).await.unwrap().into_parts();
    let header_str = |name| parts.headers.get(name).map(|v: &header::HeaderValue| v.to_str().unwrap().to_string());
    let (status, content_type, disposition) =
        (parts.status, header_str(header::CONTENT_TYPE), header_str(header::CONTENT_DISPOSITION));
    let body = body.collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, disposition, body }
}

fn ten_services() -> String {
    serde_json::to_string(&SizingRequest::homogeneous(10, RuntimeProfile::reference())).unwrap()
}

async fn post_size(app: &Router, body: String) -> Reply {
    call(app, "POST", "/api/v1/size", body).await
}

#[tokio::test]
async fn ten_service_request_sizes_and_persists() {
    let h = harness();
    let r = post_size(&h.app, ten_services()).await;
    assert_eq!(r.status, StatusCode::OK);
    let result = r.json();
    assert_eq!(result["per_tier"]["large"]["machines"].as_array().unwrap().len(), 2);
    let run_id = result["run_id"].as_str().unwrap().to_string();

    let got = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}"), Body::empty()).await;
    assert_eq!(got.status, StatusCode::OK);
    assert_eq!(got.content_type.as_deref(), Some("application/json"));
    let record: RunRecord = serde_json::from_slice(&got.body).unwrap();
    assert_eq!(record.run_id, run_id);
    assert_eq!(serde_json::to_value(&record.result).unwrap(), result);

    let again = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}"), Body::empty()).await;
    assert_eq!(again.body, got.body);
}

#[tokio::test]
async fn malformed_json_is_rejected() {
    let h = harness();
    let r = post_size(&h.app, "{not json".to_string()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["errors"][0]["malformed_json"].is_string());
}

#[tokio::test]
async fn duplicate_ids_are_listed() {
    let h = harness();
    let mut req = SizingRequest::homogeneous(3, RuntimeProfile::reference());
    req.services[2].id = "svc1".into();
    let r = post_size(&h.app, serde_json::to_string(&req).unwrap()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["errors"], json!([{ "duplicate_id": "svc1" }]));
}

#[tokio::test]
async fn all_tiers_infeasible_is_unprocessable_but_stored() {
    let h = harness();
    let mut req = SizingRequest::homogeneous(13, RuntimeProfile::reference());
    req.architecture = sizer_core::Architecture::Single;
    req.tiers = vec![HardwareTier::perflab()];
    let r = post_size(&h.app, serde_json::to_string(&req).unwrap()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let result = r.json();
    assert_eq!(result["failures"]["perflab"]["kind"], "single_machine_infeasible");
    let run_id = result["run_id"].as_str().unwrap();
    let got = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}"), Body::empty()).await;
    assert_eq!(got.status, StatusCode::OK);
    let dot = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=dot"), Body::empty()).await;
    assert_eq!(dot.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn default_tiers_match_the_hardware_table() {
    let h = harness();
    let r = call(&h.app, "GET", "/api/v1/tiers", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    let tiers: Vec<HardwareTier> = serde_json::from_slice(&r.body).unwrap();
    let rows: Vec<_> = tiers
        .iter()
        .map(|t| (t.name.as_str(), t.processors, t.cores_per_processor, t.frequency_ghz, t.ram_gb))
        .collect();
    assert_eq!(rows, vec![("medium", 2, 4, 3.07, 32.0), ("large", 2, 8, 3.07, 64.0), ("perflab", 2, 12, 3.07, 64.0)]);
}

#[tokio::test]
async fn custom_tier_file_is_served_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiers.json");
    std::fs::write(
        &path,
        r#"[{"name":"big","processors":4,"cores_per_processor":16,"frequency_ghz":2.5,"ram_gb":256}]"#,
    )
    .unwrap();
    let h = harness_with(load_tiers(&path).unwrap());
    let r = call(&h.app, "GET", "/api/v1/tiers", Body::empty()).await;
    let tiers: Vec<HardwareTier> = serde_json::from_slice(&r.body).unwrap();
    assert_eq!(tiers, vec![HardwareTier::new("big", 4, 16, 2.5, 256.0)]);

    // Requests without tiers are sized on the configured ones.
    let r = post_size(&h.app, ten_services().replace(r#""tiers":[],"#, "")).await;
    let result = r.json();
    assert_eq!(result["per_tier"].as_object().unwrap().keys().collect::<Vec<_>>(), vec!["big"]);
}

#[test]
fn empty_tier_file_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiers.json");
    std::fs::write(&path, "[]").unwrap();
    assert!(matches!(load_tiers(&path), Err(ConfigError::EmptyTiers(_))));
}

fn exact_csv(rows: usize) -> Vec<u8> {
    let c = &ModelCoefficients::default().pairs[0];
    let levels = [0.0, 50.0, 100.0, 200.0];
    let mut samples = Vec::new();
    'outer: for &u in &levels {
        for &t in &levels {
            for &p in &levels {
                if samples.len() == rows {
                    break 'outer;
                }
                samples.push(CalibrationSample {
                    tier: "perflab".into(),
                    implementation_type: "java".into(),
                    binding_type: "soap_http".into(),
                    concurrency: u,
                    throughput: t,
                    payload_total_kb: p,
                    measured_cpu_pct: c.reference_cpu_pct(u, t, p),
                    measured_mem_mb: c.memory_mb(u, p),
                });
            }
        }
    }
    let mut out = Vec::new();
    write_samples_csv(&mut out, &samples).unwrap();
    out
}

#[tokio::test]
async fn calibration_recovers_and_registers_profile() {
    let h = harness();
    let r = call(&h.app, "POST", "/api/v1/calibrate?name=lab1", exact_csv(64)).await;
    assert_eq!(r.status, StatusCode::OK);
    let fitted: ModelCoefficients = serde_json::from_slice(&r.body).unwrap();
    let (got, want) = (&fitted.pairs[0], &ModelCoefficients::default().pairs[0]);
    let pairs =
        got.cpu_terms().into_iter().chain(got.mem_terms()).zip(want.cpu_terms().into_iter().chain(want.mem_terms()));
    for (g, w) in pairs {
        assert!(((g - w) / w).abs() < 1e-9, "{g} vs {w}");
    }

    let dup = call(&h.app, "POST", "/api/v1/calibrate?name=lab1", exact_csv(64)).await;
    assert_eq!(dup.status, StatusCode::CONFLICT);

    let body = ten_services().replacen('{', r#"{"coefficients":"lab1","#, 1);
    let r = post_size(&h.app, body).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["per_tier"]["large"]["machines"].as_array().unwrap().len(), 2);

    let body = ten_services().replacen('{', r#"{"coefficients":"nope","#, 1);
    let r = post_size(&h.app, body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["errors"], json!([{ "unknown_coefficients": "nope" }]));
}

#[tokio::test]
async fn too_few_samples_is_a_bad_request() {
    let h = harness();
    let r = call(&h.app, "POST", "/api/v1/calibrate", exact_csv(2)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["errors"][0]["insufficient_samples"].is_string());

    let r = call(&h.app, "POST", "/api/v1/calibrate?reference=mainframe", exact_csv(64)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["errors"][0]["unknown_tier"].is_string());
}

#[tokio::test]
async fn unknown_and_malformed_run_ids_are_not_found() {
    let h = harness();
    for uri in ["/api/v1/runs/20260101T000000000000Z-deadbeef", "/api/v1/runs/..%2F..%2Fetc", "/api/v1/runs/a.b"] {
        assert_eq!(call(&h.app, "GET", uri, Body::empty()).await.status, StatusCode::NOT_FOUND, "{uri}");
    }
    let r = call(&h.app, "GET", "/api/v1/runs/nothing/report?format=markdown", Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reports_pass_through_emitters() {
    let h = harness();
    let run_id = post_size(&h.app, ten_services()).await.json()["run_id"].as_str().unwrap().to_string();
    let stored: RunRecord =
        serde_json::from_slice(&call(&h.app, "GET", &format!("/api/v1/runs/{run_id}"), Body::empty()).await.body)
            .unwrap();

    let md = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=markdown"), Body::empty()).await;
    assert_eq!(md.status, StatusCode::OK);
    assert_eq!(md.text(), emit_summary_report(&stored.result));
    assert!(md.content_type.unwrap().starts_with("text/markdown"));
    assert!(md.disposition.unwrap().starts_with("attachment"));

    let dot = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=dot&tier=large"), Body::empty()).await;
    assert_eq!(dot.content_type.as_deref(), Some("text/vnd.graphviz"));
    assert_eq!(dot.text(), sizer_core::report::emit_topology_graph(&stored.result.per_tier["large"]));

    let infra = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=dot"), Body::empty()).await;
    assert_eq!(infra.text(), sizer_core::report::emit_infrastructure_diagram(&stored.result).unwrap());

    let csv = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=csv"), Body::empty()).await;
    assert!(csv.content_type.as_deref().unwrap().starts_with("text/csv"));
    assert_eq!(csv.text(), sizer_core::report::emit_performance_curve(&stored.result.curves["perflab"], 80.0));

    let missing =
        call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=csv&tier=nope"), Body::empty()).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);

    let bad = call(&h.app, "GET", &format!("/api/v1/runs/{run_id}/report?format=pdf"), Body::empty()).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_posts_each_get_a_record() {
    let h = harness();
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let app = h.app.clone();
            tokio::spawn(
                async move { post_size(&app, ten_services()).await.json()["run_id"].as_str().unwrap().to_string() },
            )
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    let unique: std::collections::HashSet<_> = ids.iter().collect();
    assert_eq!(unique.len(), ids.len());
    for id in &ids {
        let r = call(&h.app, "GET", &format!("/api/v1/runs/{id}"), Body::empty()).await;
        let record: RunRecord = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(&record.run_id, id);
    }
}

#[tokio::test]
async fn ui_directory_is_served_as_fallback() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>sizer</html>").unwrap();
    let data = tempfile::tempdir().unwrap();
    let state = AppState::new(data.path(), HardwareTier::standard(), ModelCoefficients::default()).unwrap();
    let app = router(Arc::new(state), Some(ui.path()));
    let r = call(&app, "GET", "/index.html", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.text(), "<html>sizer</html>");
    assert_eq!(call(&app, "GET", "/api/v1/tiers", Body::empty()).await.status, StatusCode::OK);
}
