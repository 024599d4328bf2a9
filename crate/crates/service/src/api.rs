use std::net::SocketAddr;
use std::sync::Arc;

use annotator_core::campaign::Progress;
use annotator_core::FrequencyReport;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::session::{
    LabelAck, LabelRequest, PointPayload, QueryPayload, Session, SessionError, SessionView, Status,
};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<Progress>,
}

#[derive(Debug)]
pub struct ApiError {
    code: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(code: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            code,
            body: ErrorBody {
                error: error.into(),
                status: None,
                progress: None,
            },
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Done(progress) => ApiError {
                code: StatusCode::CONFLICT,
                body: ErrorBody {
                    error: "campaign is done".into(),
                    status: Some(Status::Done),
                    progress: Some(progress),
                },
            },
            SessionError::Conflict(m) => ApiError::new(StatusCode::CONFLICT, m),
            SessionError::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            SessionError::Internal(e) => {
                log::error!("{e}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}

impl From<annotator_core::Error> for ApiError {
    fn from(e: annotator_core::Error) -> Self {
        SessionError::Internal(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub session: Arc<Session>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoints {
    pub scan_id: String,
    pub stride: usize,
    pub total_points: usize,
    pub points: Vec<PointPayload>,
}

#[derive(Debug, Deserialize)]
pub struct StrideQuery {
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEntry {
    pub id: u16,
    pub name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Palette {
    pub classes: Vec<ClassEntry>,
}

/// Deterministic display color for a train id, spaced by the golden angle.
pub fn class_color(id: u16) -> String {
    let h = (f64::from(id) * 137.507_764) % 360.0;
    let (s, v) = (0.65, 0.95);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let byte = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

fn session_for(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    if state.session.id() == id {
        Ok(state.session.clone())
    } else {
        Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown session {id}"),
        ))
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<SessionView> {
    Ok(Json(session_for(&state, &id)?.view()))
}

async fn get_next(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<QueryPayload> {
    let session = session_for(&state, &id)?;
    let payload = blocking(move || session.next().map_err(ApiError::from)).await?;
    Ok(Json(payload))
}

async fn post_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<LabelAck> {
    let session = session_for(&state, &id)?;
    let Json(req) =
        body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let ack = blocking(move || session.label(req).map_err(ApiError::from)).await?;
    Ok(Json(ack))
}

async fn get_points(
    State(state): State<AppState>,
    Path(scan_id): Path<String>,
    query: Result<Query<StrideQuery>, QueryRejection>,
) -> ApiResult<ScanPoints> {
    let Query(q) =
        query.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let stride = q.stride.unwrap_or(1);
    if stride == 0 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "stride must be at least 1",
        ));
    }
    let cloud = state
        .session
        .cloud(&scan_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown scan {scan_id}")))?;
    let points = cloud
        .points()
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, p)| PointPayload {
            index: i as u32,
            x: p.x,
            y: p.y,
            z: p.z,
            intensity: p.intensity,
        })
        .collect();
    Ok(Json(ScanPoints {
        scan_id,
        stride,
        total_points: cloud.len(),
        points,
    }))
}

async fn get_stats(State(state): State<AppState>) -> ApiResult<FrequencyReport> {
    let session = state.session.clone();
    let report = blocking(move || session.stats().map_err(ApiError::from)).await?;
    Ok(Json(report))
}

async fn get_classes(State(state): State<AppState>) -> ApiResult<Palette> {
    let names = state.session.class_names();
    let classes = (1..=state.session.classes())
        .map(|id| ClassEntry {
            id,
            name: names
                .get(usize::from(id) - 1)
                .cloned()
                .unwrap_or_else(|| format!("class_{id}")),
            color: class_color(id),
        })
        .collect();
    Ok(Json(Palette { classes }))
}

pub fn router(session: Arc<Session>) -> Router {
    let api = Router::new()
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/next", get(get_next))
        .route("/session/{id}/label", post(post_label))
        .route("/scan/{id}/points", get(get_points))
        .route("/stats", get(get_stats))
        .route("/classes", get(get_classes));
    Router::new()
        .nest(API_PREFIX, api)
        .with_state(AppState { session })
}

/// Serves `session` until the process is stopped.
pub async fn serve(session: Arc<Session>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "session {} listening on http://{}{API_PREFIX}",
        session.id(),
        listener.local_addr()?
    );
    axum::serve(listener, router(session)).await
}
