#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, Response, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use mangaroll::genai::{FixtureStore, Gateway, GatewayMode, ServiceRequest, Transport, TransportError};
use mangaroll::media::rawvideo::RawVideoDecoder;
use mangaroll_service::{router, AppState, ProjectStore};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

pub fn corpus_video() -> PathBuf {
    corpus_dir().join("match.mrv").canonicalize().unwrap()
}

pub fn corpus_replay() -> FixtureStore {
    FixtureStore::new(corpus_dir().join("replay"))
}

/// Fails every request and counts the attempts.
#[derive(Default)]
pub struct NetworkGuard {
    pub sends: AtomicUsize,
}

impl NetworkGuard {
    pub fn count(&self) -> usize {
        self.sends.load(Ordering::SeqCst)
    }
}

impl Transport for NetworkGuard {
    fn send(&self, request: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        self.sends.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Permanent(format!("network disabled ({})", request.kind.as_str())))
    }
}

pub struct TestApp {
    pub router: Router,
    pub state: Arc<AppState>,
    pub guard: Arc<NetworkGuard>,
    pub root: tempfile::TempDir,
}

/// Service over a fresh workspace, replaying the bundled fixtures behind
/// a transport that records any attempt to go live.
pub fn replay_app(seed: Option<u64>) -> TestApp {
    let root = tempfile::tempdir().unwrap();
    let guard = Arc::new(NetworkGuard::default());
    let gateway = Gateway::new(guard.clone(), GatewayMode::Replay(corpus_replay()));
    let store = ProjectStore::new(root.path()).unwrap();
    let state = Arc::new(AppState::new(store, Arc::new(RawVideoDecoder), Arc::new(gateway)).with_seed(seed));
    TestApp { router: router(state.clone()), state, guard, root }
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Response<()>, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let (parts, body) = resp.into_parts();
    let bytes = body.collect().await.unwrap().to_bytes().to_vec();
    (parts.status, Response::from_parts(parts, ()), bytes)
}

pub fn json_req(method: &str, uri: &str, body: &Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

pub fn get(uri: &str) -> Request<Body> {
    Request::builder().uri(uri).body(Body::empty()).unwrap()
}

pub async fn create_project(app: &Router) -> String {
    let body = serde_json::json!({ "path": corpus_video() });
    let (status, _, bytes) = send(app, json_req("POST", "/projects", &body)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["id"].as_str().unwrap().to_owned()
}

/// Polls a job until it leaves the queue and returns its final status.
pub async fn wait_job(app: &Router, job: &Value) -> Value {
    let id = job["id"].as_str().unwrap();
    for _ in 0..1200 {
        let (status, _, bytes) = send(app, get(&format!("/jobs/{id}"))).await;
        assert_eq!(status, StatusCode::OK);
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        if v["state"] == "done" || v["state"] == "failed" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

/// Creates and analyzes a project with the bundled config.
pub async fn analyzed_project(app: &Router) -> String {
    let id = create_project(app).await;
    let config: Value = serde_json::from_slice(&std::fs::read(corpus_dir().join("config.json")).unwrap()).unwrap();
    let (status, _, bytes) =
        send(app, json_req("POST", &format!("/projects/{id}/analyze"), &serde_json::json!({ "config": config }))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let done = wait_job(app, &serde_json::from_slice(&bytes).unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    id
}
