use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};

use crate::AppState;

pub const HEADER: &str = "idempotency-key";
const MAX_BODY: usize = 64 << 20;

#[derive(Clone)]
struct Stored {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

/// Responses to mutating requests keyed by method, path and the client's
/// idempotency key.
#[derive(Default)]
pub struct IdempotencyCache {
    entries: Mutex<HashMap<(Method, String, String), Stored>>,
}

/// Replays the stored response when a mutating request repeats its key.
/// Conflicts and server errors are not stored so the client can retry.
pub async fn layer(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let key = match req.headers().get(HEADER).and_then(|v| v.to_str().ok()) {
        Some(k) if matches!(*req.method(), Method::POST | Method::PATCH | Method::PUT) => k.to_owned(),
        _ => return next.run(req).await,
    };
    let id = (req.method().clone(), req.uri().path().to_owned(), key);
    if let Some(s) = state.idempotency.entries.lock().expect("cache lock").get(&id).cloned() {
        let mut resp = (s.status, s.body).into_response();
        *resp.headers_mut() = s.headers;
        resp.headers_mut().insert("idempotent-replay", "true".parse().expect("static header"));
        return resp;
    }
    let resp = next.run(req).await;
    let status = resp.status();
    if status == StatusCode::CONFLICT || status.is_server_error() {
        return resp;
    }
    let (parts, body) = resp.into_parts();
    let body = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return crate::ApiError::internal(e).into_response(),
    };
    let stored = Stored { status, headers: parts.headers.clone(), body: body.clone() };
    state.idempotency.entries.lock().expect("cache lock").insert(id, stored);
    Response::from_parts(parts, Body::from(body))
}
