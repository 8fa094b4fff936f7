use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{ReaderError, Result};
use crate::pool::Sequence;
use crate::render::Axis;
use crate::service::ReaderService;
use crate::session::Answer;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ReaderError {
    pub fn status(&self) -> StatusCode {
        match self {
            ReaderError::NotFound(_) => StatusCode::NOT_FOUND,
            ReaderError::Complete
            | ReaderError::Incomplete { .. }
            | ReaderError::Ordering { .. }
            | ReaderError::Conflict(_) => StatusCode::CONFLICT,
            ReaderError::Capacity(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReaderError::BadRequest(_) | ReaderError::OutOfRange(_) => StatusCode::BAD_REQUEST,
            ReaderError::Unauthorized => StatusCode::UNAUTHORIZED,
            ReaderError::Journal(_) | ReaderError::Render(_) | ReaderError::Io(_) | ReaderError::Core(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ReaderError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(ErrorBody { code: self.code().into(), message: self.to_string() })).into_response()
    }
}

impl From<JsonRejection> for ReaderError {
    fn from(r: JsonRejection) -> Self {
        ReaderError::BadRequest(r.body_text())
    }
}

impl From<PathRejection> for ReaderError {
    fn from(r: PathRejection) -> Self {
        ReaderError::BadRequest(r.body_text())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub reader_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Abandon the reader's active session and start a new one.
    #[serde(default)]
    pub replace: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRequest {
    pub token: String,
    pub answer: Answer,
    #[serde(default)]
    pub duration_ms: u64,
}

#[derive(Clone)]
struct AppState {
    service: Arc<ReaderService>,
    bearer: Option<Arc<str>>,
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ReaderError::Io(std::io::Error::other(e.to_string())))?
}

async fn create_session(
    State(st): State<AppState>,
    body: std::result::Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<impl IntoResponse> {
    let Json(req) = body?;
    let view = blocking(move || st.service.create_session(&req.reader_id, req.seed, req.replace)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(st): State<AppState>, id: std::result::Result<Path<String>, PathRejection>) -> Result<impl IntoResponse> {
    let Path(id) = id?;
    Ok(Json(st.service.session_view(&id)?))
}

async fn next_case(State(st): State<AppState>, id: std::result::Result<Path<String>, PathRejection>) -> Result<impl IntoResponse> {
    let Path(id) = id?;
    Ok(Json(blocking(move || st.service.next_case(&id)).await?))
}

async fn slice(
    State(st): State<AppState>,
    params: std::result::Result<Path<(String, String, String, usize)>, PathRejection>,
) -> Result<impl IntoResponse> {
    let Path((token, seq, axis, index)) = params?;
    let seq: Sequence = seq.parse()?;
    let axis: Axis = axis.parse()?;
    let png = blocking(move || st.service.render_slice(&token, seq, axis, index)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::CACHE_CONTROL, HeaderValue::from_static("no-store")),
        ],
        png,
    ))
}

async fn record_response(
    State(st): State<AppState>,
    id: std::result::Result<Path<String>, PathRejection>,
    body: std::result::Result<Json<ResponseRequest>, JsonRejection>,
) -> Result<impl IntoResponse> {
    let Path(id) = id?;
    let Json(req) = body?;
    let ack = blocking(move || st.service.record_response(&id, &req.token, req.answer, req.duration_ms)).await?;
    Ok(Json(ack))
}

async fn report(State(st): State<AppState>, id: std::result::Result<Path<String>, PathRejection>) -> Result<impl IntoResponse> {
    let Path(id) = id?;
    Ok(Json(blocking(move || st.service.session_report(&id)).await?))
}

async fn require_bearer(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(expected) = &st.bearer {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**expected);
        if !ok {
            return ReaderError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// All routes; `bearer` enables a shared-token check on every route except
/// `/health`.
pub fn router(service: Arc<ReaderService>, bearer: Option<String>) -> Router {
    let state = AppState { service, bearer: bearer.map(Into::into) };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_case))
        .route("/sessions/{id}/responses", post(record_response))
        .route("/sessions/{id}/report", get(report))
        .route("/slices/{token}/{seq}/{axis}/{index}", get(slice))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_bearer))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub manifest: PathBuf,
    pub journal_dir: PathBuf,
    pub seed: u64,
    pub bearer_token: Option<String>,
}

/// Loads the pool, replays journals and serves until ctrl-c.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let cfg = config.clone();
    let service = blocking(move || ReaderService::from_manifest(&cfg.manifest, &cfg.journal_dir, cfg.seed)).await?;
    let app = router(Arc::new(service), config.bearer_token);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    log::info!("reader study listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    Ok(())
}
