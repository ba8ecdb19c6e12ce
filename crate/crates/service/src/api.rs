use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::DefaultBodyLimit;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{middleware, Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use mangaroll::genai::Gateway;
use mangaroll::media::Decoder;
use mangaroll::pipeline::{self, PipelineEnv, Stage};
use mangaroll::render::SinkConfig;
use mangaroll::timeline::{apply_edit, canonical_bytes, save_project, EditOp, PipelineConfig, SuggestionLevel};

use crate::idempotency::{self, IdempotencyCache};
use crate::jobs::{JobKind, JobRegistry, JobStatus};
use crate::store::{revision, ProjectStore};
use crate::ApiError;

pub struct AppState {
    pub store: ProjectStore,
    pub decoder: Arc<dyn Decoder>,
    pub gateway: Arc<Gateway>,
    pub jobs: Arc<JobRegistry>,
    /// Overrides the seed of every analysis when set.
    pub seed: Option<u64>,
    pub(crate) idempotency: IdempotencyCache,
}

impl AppState {
    pub fn new(store: ProjectStore, decoder: Arc<dyn Decoder>, gateway: Arc<Gateway>) -> Self {
        Self {
            store,
            decoder,
            gateway,
            jobs: Arc::new(JobRegistry::new(JobRegistry::DEFAULT_WORKERS)),
            seed: None,
            idempotency: IdempotencyCache::default(),
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn env(&self) -> PipelineEnv {
        PipelineEnv::new(self.decoder.clone(), self.gateway.clone())
    }
}

/// Largest accepted video upload; uploads are buffered in memory.
pub const UPLOAD_LIMIT: usize = 512 * 1024 * 1024;

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([header::ETAG]);
    Router::new()
        .route("/projects", post(create_project).layer(DefaultBodyLimit::max(UPLOAD_LIMIT)))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/analyze", post(analyze))
        .route("/projects/{id}/suggestions", get(suggestions))
        .route("/projects/{id}/timeline", patch(edit_timeline))
        .route("/projects/{id}/assets/{asset_id}", get(get_asset))
        .route("/projects/{id}/render", post(render))
        .route("/projects/{id}/thumbnail", get(thumbnail))
        .route("/jobs/{id}", get(get_job))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::layer))
        .layer(cors)
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn project_response(status: StatusCode, bytes: Vec<u8>) -> Response {
    let etag = format!("\"{}\"", revision(&bytes));
    let mut resp = (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    resp.headers_mut().insert(header::ETAG, HeaderValue::from_str(&etag).expect("hex etag"));
    resp
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::unprocessable(e.body_text()))
}

#[derive(Deserialize)]
struct CreateBody {
    path: PathBuf,
}

#[derive(Deserialize)]
struct CreateQuery {
    ext: Option<String>,
}

/// JSON `{path}` registers a local file; any other body is an upload.
async fn create_project(State(st): Shared, Query(q): Query<CreateQuery>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (id, project) = if is_json {
        let b: CreateBody = serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let st = st.clone();
        blocking(move || st.store.create(&b.path, st.decoder.as_ref())).await?
    } else {
        if body.is_empty() {
            return Err(ApiError::unprocessable("empty upload"));
        }
        let ext = q.ext.unwrap_or_else(|| mangaroll::media::rawvideo::EXTENSION.to_owned());
        let st = st.clone();
        blocking(move || st.store.create_from_upload(&body, &ext, st.decoder.as_ref())).await?
    };
    tracing::info!(%id, source = %project.source, "project created");
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "media": project.media }))).into_response())
}

async fn get_project(State(st): Shared, Path(id): Path<String>) -> ApiResult {
    let ws = st.store.workspace(&id)?;
    let bytes = tokio::fs::read(ws.project_path()).await.map_err(ApiError::internal)?;
    Ok(project_response(StatusCode::OK, bytes))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AnalyzeBody {
    #[serde(default)]
    config: Option<PipelineConfig>,
}

async fn analyze(State(st): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: AnalyzeBody = if body.is_empty() {
        AnalyzeBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(e.to_string()))?
    };
    let (project, _) = st.store.load(&id)?;
    let mut config = body.config.unwrap_or_else(|| project.config.clone());
    if let Some(seed) = st.seed {
        config.seed = seed;
    }
    config.validate().map_err(ApiError::unprocessable)?;
    let guard = st.store.try_lock(&id)?;
    let ws = st.store.workspace(&id)?;
    let source = PathBuf::from(&project.source);
    let mut env = st.env();
    let job = st.jobs.submit(JobKind::Analyze, &id, move |progress| {
        let _guard = guard;
        env.progress = Some(Arc::new(move |stage: Stage, f: f64| {
            tracing::debug!(stage = stage.as_str(), "analysis progress");
            progress(f)
        }));
        match pipeline::run(&source, &config, &env, &ws) {
            Ok((_, report)) => Ok(serde_json::to_value(report).expect("report serializes")),
            Err(f) => Err(f.error.to_string()),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

#[derive(Deserialize)]
struct SuggestQuery {
    level: Option<String>,
}

async fn suggestions(State(st): Shared, Path(id): Path<String>, Query(q): Query<SuggestQuery>) -> ApiResult {
    let (mut project, _) = st.store.load(&id)?;
    let level = match q.level.as_deref() {
        None => project.config.suggestion_level,
        Some(s) => SuggestionLevel::parse(s).ok_or_else(|| ApiError::unprocessable(format!("unknown level {s:?}")))?,
    };
    let guard = if level == SuggestionLevel::Proactive { Some(st.store.try_lock(&id)?) } else { None };
    let ws = st.store.workspace(&id)?;
    let env = st.env();
    let st2 = st.clone();
    let out = blocking(move || {
        let _guard = guard;
        if level == SuggestionLevel::Proactive {
            // Re-read under the writer lock.
            project = st2.store.load(&id)?.0;
        }
        let out = pipeline::suggest(&mut project, level, &env, &ws)?;
        if level == SuggestionLevel::Proactive {
            save_project(&project, ws.project_path())?;
        }
        Ok(out)
    })
    .await?;
    Ok(Json(out).into_response())
}

fn if_match(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::IF_MATCH)
        .and_then(|v| v.to_str().ok())
        .map(|s| s.trim().trim_start_matches("W/").trim_matches('"').to_owned())
}

/// Applies one edit. The stored file is replaced atomically, and only
/// when the edited project validates.
async fn edit_timeline(
    State(st): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<EditOp>, JsonRejection>,
) -> ApiResult {
    st.store.workspace(&id)?;
    let op = json_body(body)?;
    let guard = st.store.try_lock(&id)?;
    let expected = if_match(&headers);
    let st2 = st.clone();
    let bytes = blocking(move || {
        let _guard = guard;
        let (project, bytes) = st2.store.load(&id)?;
        if let Some(rev) = expected.filter(|r| r != "*") {
            let current = revision(&bytes);
            if rev != current {
                return Err(ApiError {
                    status: StatusCode::CONFLICT,
                    body: json!({ "error": "project changed since it was read", "revision": current }),
                });
            }
        }
        let edited = apply_edit(&project, &op)?;
        let ws = st2.store.workspace(&id)?;
        save_project(&edited, ws.project_path())?;
        Ok(canonical_bytes(&edited))
    })
    .await?;
    Ok(project_response(StatusCode::OK, bytes))
}

async fn get_asset(State(st): Shared, Path((id, asset_id)): Path<(String, String)>) -> ApiResult {
    let ws = st.store.workspace(&id)?;
    let png = blocking(move || {
        ws.assets()
            .load_png(&asset_id)
            .map_err(|_| ApiError::not_found(format!("asset {asset_id}")))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RenderBody {
    #[serde(default)]
    sink: Option<SinkConfig>,
}

async fn render(State(st): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: RenderBody = if body.is_empty() {
        RenderBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(e.to_string()))?
    };
    let (project, _) = st.store.load(&id)?;
    let ws = st.store.workspace(&id)?;
    let decoder = st.decoder.clone();
    let jobs = st.jobs.clone();
    let dir = ws.dir().to_owned();
    let job = jobs.submit(JobKind::Render, &id, move |progress| {
        let sink = match body.sink {
            None => SinkConfig::ImageSequence { dir: dir.join("render") },
            Some(SinkConfig::ImageSequence { dir: d }) => SinkConfig::ImageSequence { dir: dir.join(d) },
            Some(SinkConfig::Encoder { path }) => SinkConfig::Encoder { path: dir.join(path) },
            Some(other) => other,
        };
        progress(0.0);
        let stats = pipeline::render_project(&project, &ws, decoder, &sink).map_err(|e| e.to_string())?;
        Ok(serde_json::to_value(stats).expect("stats serialize"))
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

#[derive(Deserialize)]
struct ThumbQuery {
    frame: Option<u64>,
}

async fn thumbnail(State(st): Shared, Path(id): Path<String>, Query(q): Query<ThumbQuery>) -> ApiResult {
    let (project, _) = st.store.load(&id)?;
    let ws = st.store.workspace(&id)?;
    let decoder = st.decoder.clone();
    let n = q.frame.unwrap_or(0);
    let png = blocking(move || Ok(pipeline::thumbnail(&project, &ws, decoder, n)?.to_png())).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn get_job(State(st): Shared, Path(id): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    st.jobs.get(&id).map(Json).ok_or_else(|| ApiError::not_found(format!("job {id}")))
}
