//! HTTP routes. Handlers only enqueue commands and read the latest
//! published snapshot; none of them touch the simulation directly.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::sync::watch;
use webhaptics::linac::list_attachments;
use webhaptics::sim::{parse_command, primitive_list, CommandError};
use webhaptics::x3d::serialize_x3d;

use crate::engine::{CommandSink, Published};

pub const X3D_MEDIA_TYPE: &str = "model/x3d+xml";

#[derive(Debug, Clone)]
pub struct AppState {
    pub sink: CommandSink,
    pub feed: watch::Receiver<Arc<Published>>,
    pub attachments_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

#[derive(Debug)]
pub enum ApiError {
    ValidationFailed(String),
    UnknownTarget(String),
    SceneNotFound(String),
    RegistryMissing,
    RegistryUnreadable(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, message) = match self {
            ApiError::ValidationFailed(m) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", m)
            }
            ApiError::UnknownTarget(t) => (
                StatusCode::BAD_REQUEST,
                "unknown_target",
                format!("unknown command target {t:?}"),
            ),
            ApiError::SceneNotFound(name) => (
                StatusCode::NOT_FOUND,
                "scene_not_found",
                format!("no scene named {name:?}"),
            ),
            ApiError::RegistryMissing => (
                StatusCode::SERVICE_UNAVAILABLE,
                "registry_missing",
                "no attachment directory configured".into(),
            ),
            ApiError::RegistryUnreadable(m) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "registry_unreadable", m)
            }
        };
        (status, Json(ErrorBody { error, message })).into_response()
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        match e {
            CommandError::UnknownTarget(t) => ApiError::UnknownTarget(t),
            other => ApiError::ValidationFailed(other.to_string()),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/attachments", get(list_attachments_handler))
        .route("/api/scene/{name}", get(scene_handler))
        .route("/api/command", post(command_handler))
        .route("/ws/state", get(state_stream_handler))
        .with_state(state)
}

async fn list_attachments_handler(
    State(app): State<AppState>,
) -> Result<Json<Vec<String>>, ApiError> {
    let dir = app.attachments_dir.ok_or(ApiError::RegistryMissing)?;
    let listing = tokio::task::spawn_blocking(move || list_attachments(&dir))
        .await
        .map_err(|e| ApiError::RegistryUnreadable(e.to_string()))?;
    listing
        .map(Json)
        .map_err(|e| ApiError::RegistryUnreadable(e.to_string()))
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|v| {
            v.split(';')
                .next()
                .is_some_and(|t| t.trim().eq_ignore_ascii_case("application/json"))
        })
}

/// The scene as X3D, or as a list of world-placed primitives when the
/// client asks for JSON.
async fn scene_handler(
    State(app): State<AppState>,
    Path(name): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let published = app.feed.borrow().clone();
    let doc = published
        .scenes
        .get(&name)
        .ok_or(ApiError::SceneNotFound(name))?;
    if wants_json(&headers) {
        Ok(Json(primitive_list(doc)).into_response())
    } else {
        Ok(([(header::CONTENT_TYPE, X3D_MEDIA_TYPE)], serialize_x3d(doc)).into_response())
    }
}

async fn command_handler(State(app): State<AppState>, body: String) -> Result<Response, ApiError> {
    let envelope = parse_command(&body)?;
    let ack = app.sink.submit(envelope);
    Ok((StatusCode::ACCEPTED, Json(ack)).into_response())
}

async fn state_stream_handler(State(app): State<AppState>, ws: WebSocketUpgrade) -> Response {
    let feed = SnapshotFeed::new(app.feed.clone());
    ws.on_upgrade(move |socket| stream_snapshots(socket, feed))
}

/// Latest-value view of the published snapshots for one consumer. A slow
/// consumer skips straight to the newest snapshot, and ticks never repeat
/// or go backwards.
#[derive(Debug)]
pub struct SnapshotFeed {
    rx: watch::Receiver<Arc<Published>>,
    last_tick: Option<u64>,
}

impl SnapshotFeed {
    pub fn new(rx: watch::Receiver<Arc<Published>>) -> Self {
        SnapshotFeed {
            rx,
            last_tick: None,
        }
    }

    fn take_fresh(&mut self) -> Option<Arc<Published>> {
        let p = self.rx.borrow_and_update().clone();
        let tick = p.snapshot.tick;
        if self.last_tick.is_some_and(|t| tick <= t) {
            return None;
        }
        self.last_tick = Some(tick);
        Some(p)
    }

    /// Waits for a snapshot newer than the last one returned. `None` once
    /// the simulation has shut down.
    pub async fn next(&mut self) -> Option<Arc<Published>> {
        loop {
            if let Some(p) = self.take_fresh() {
                return Some(p);
            }
            self.rx.changed().await.ok()?;
        }
    }
}

async fn stream_snapshots(mut socket: WebSocket, mut feed: SnapshotFeed) {
    loop {
        tokio::select! {
            next = feed.next() => {
                let Some(p) = next else { break };
                let text = match serde_json::to_string(&p.snapshot) {
                    Ok(t) => t,
                    Err(e) => {
                        tracing::error!("snapshot serialization failed: {e}");
                        break;
                    }
                };
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
