use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pointbim::calibration::Session;
use pointbim::config::Config;
use pointbim::ifc::validate_step_str;
use pointbim::pipeline::Dilution;
use pointbim::synth;
use pointbim_cli::server::router;

fn app() -> Router {
    let (cloud, _) = synth::generate(&synth::orthogonal_two_storey()).unwrap();
    let s = Session::new(cloud, "synthetic", Config::default(), Dilution::None).unwrap();
    router(Arc::new(Mutex::new(s)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

#[tokio::test]
async fn params_then_stage_runs_and_caches() {
    let app = app();
    let (s, v) = call_json(&app, "PUT", "/api/params", Some(json!({"epsilon": 0.02}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["calibration"]["epsilon"], 0.02);

    let (s, v) = call_json(&app, "POST", "/api/stage/slabs/run", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = call_json(&app, "POST", "/api/stage/walls/run", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["cached"], false);
    assert_eq!(v["result"]["walls"].as_array().unwrap().len(), 10);

    let (s, again) = call_json(&app, "POST", "/api/stage/walls/run", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again["cached"], true);
    assert_eq!(again["key"], v["key"]);

    let id = v["previews"][0].as_str().unwrap().to_string();
    let (s, png) = call(&app, "GET", &format!("/api/preview/{id}.png"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (s, _) = call(&app, "GET", "/api/preview/nothing.png", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_param_is_400_naming_the_field() {
    let app = app();
    let (s, v) = call_json(&app, "PUT", "/api/params", Some(json!({"epsilon": -1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"][0]["field"], "epsilon");
    assert!(v["error"].as_str().unwrap().contains("epsilon"));
    let (_, info) = call_json(&app, "GET", "/api/session", None).await;
    assert_eq!(info["params"]["calibration"]["epsilon"], 0.02);

    let (s, v) = call_json(&app, "PUT", "/api/params", Some(json!({"gizmo": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"][0]["field"], "gizmo");
}

#[tokio::test]
async fn missing_or_stale_prerequisite_is_409() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/api/stage/walls/run", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("slabs"));

    call_json(&app, "POST", "/api/stage/slabs/run", None).await;
    call_json(&app, "PUT", "/api/params", Some(json!({"z_step": 0.04}))).await;
    let (s, _) = call_json(&app, "POST", "/api/stage/walls/run", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, info) = call_json(&app, "GET", "/api/session", None).await;
    assert_eq!(info["stages"][0]["status"], "stale");

    let (s, _) = call_json(&app, "POST", "/api/stage/roofs/run", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn export_returns_a_valid_model() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/api/export", Some(json!({"seed": 7}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["counts"]["walls"], 10);
    let ifc = v["ifc"].as_str().unwrap();
    assert!(validate_step_str(ifc).is_valid());
    let (_, info) = call_json(&app, "GET", "/api/session", None).await;
    assert!(info["stages"].as_array().unwrap().iter().all(|s| s["status"] == "fresh"));
}

#[tokio::test]
async fn exported_config_reproduces_the_model_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, _) = synth::generate(&synth::orthogonal_two_storey()).unwrap();
    let xyz = dir.path().join("o.xyz");
    pointbim::cloud_io::write_xyz(&cloud, &xyz).unwrap();
    let s = Session::new(pointbim::cloud_io::load_cloud(&xyz).unwrap(), "o.xyz", Config::default(), Dilution::None)
        .unwrap();
    let app = router(Arc::new(Mutex::new(s)));
    call_json(&app, "PUT", "/api/params", Some(json!({"epsilon": 0.03, "min_wall_length": 0.6}))).await;
    let (_, v) = call_json(&app, "POST", "/api/export", Some(json!({"seed": 11}))).await;

    let cfg = dir.path().join("saved.toml");
    std::fs::write(&cfg, v["config"].as_str().unwrap()).unwrap();
    let out = dir.path().join("model.ifc");
    pointbim_cli::commands::convert(&xyz, Some(&cfg), &out, Some(11), true, Dilution::None).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), v["ifc"].as_str().unwrap());
}
