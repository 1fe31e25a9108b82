use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tapseg_core::{Error, PromptBundle};

use crate::events::Replay;
use crate::session::{ControlVerb, CreateSession, SessionHandle};
use crate::AppState;

/// Error body: `{"error": kind, "message": ..., "field": ...}`.
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            kind: "not_found",
            message: format!("no session `{id}`"),
            field: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind, field) = match e.root() {
            Error::Config { field, .. } => (StatusCode::BAD_REQUEST, "config", Some(field.clone())),
            Error::InvalidArgument(_) | Error::Image(_) | Error::Json(_) | Error::Decode(_) => {
                (StatusCode::BAD_REQUEST, "invalid_argument", None)
            }
            Error::EmptyRegion { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "empty_region", None),
            Error::Capability(_) => (StatusCode::UNPROCESSABLE_ENTITY, "capability", None),
            Error::State(_) => (StatusCode::CONFLICT, "state", None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
            field,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind,
            message: &self.message,
            field: self.field.as_deref(),
        };
        (self.status, Json(serde_json::to_value(body).expect("error body"))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/prompts", post(submit_prompts))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/frames", post(push_frame))
        .route("/sessions/{id}/frames/end", post(end_frames))
        .route("/sessions/{id}/frames/{index}", get(get_frame))
        .with_state(state)
}

fn session(state: &AppState, id: &str) -> ApiResult<Arc<SessionHandle>> {
    state.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = serde_json::from_slice(&body).map_err(|e| {
        let msg = e.to_string();
        let field = if msg.contains("source") { "source" } else { "config" };
        Error::config(field, msg)
    })?;
    let handle = state.create(req).await?;
    Ok((StatusCode::CREATED, Json(handle.info())))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.info()))
}

/// Either `{"prompts": [...]}` or a single prompt bundle.
#[derive(Deserialize)]
#[serde(untagged)]
enum PromptRequest {
    Many { prompts: Vec<PromptBundle> },
    One(PromptBundle),
}

async fn submit_prompts(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<PromptRequest>,
) -> ApiResult<impl IntoResponse> {
    let handle = session(&state, &id)?;
    let prompts = match req {
        PromptRequest::Many { prompts } => prompts,
        PromptRequest::One(p) => vec![p],
    };
    Ok(Json(handle.prompt(prompts).await?))
}

#[derive(Deserialize)]
struct ControlRequest {
    verb: ControlVerb,
}

async fn control(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ControlRequest>,
) -> ApiResult<impl IntoResponse> {
    let handle = session(&state, &id)?;
    let next = handle.control(req.verb).await?;
    Ok(Json(serde_json::json!({ "state": next })))
}

async fn push_frame(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let handle = session(&state, &id)?;
    let index = tokio::task::spawn_blocking(move || handle.push_frame(&body))
        .await
        .map_err(|e| Error::invalid(e.to_string()))??;
    Ok(Json(serde_json::json!({ "frame_index": index })))
}

async fn end_frames(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    session(&state, &id)?.end_frames()?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_frame(State(state): State<AppState>, Path((id, index)): Path<(String, u64)>) -> ApiResult<Response> {
    let frame = session(&state, &id)?.recent_frame(index).ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        kind: "not_found",
        message: format!("frame {index} is not cached"),
        field: None,
    })?;
    let mut png = std::io::Cursor::new(Vec::new());
    frame
        .to_rgb_image()
        .write_to(&mut png, image::ImageFormat::Png)
        .map_err(Error::from)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.into_inner()).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Last sequence number the client has seen.
    after: Option<u64>,
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let handle = session(&state, &id)?;
    let from = q.after.map_or(0, |a| a + 1);
    Ok(ws.on_upgrade(move |socket| stream_events(socket, handle, from)))
}

/// Messages a client may send on the event channel.
#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum ClientMessage {
    Prompt { prompts: Vec<PromptBundle> },
    Control { verb: ControlVerb },
}

async fn client_reply(handle: &SessionHandle, text: &str) -> serde_json::Value {
    let reply = match serde_json::from_str::<ClientMessage>(text) {
        Err(e) => Err(ApiError::from(Error::invalid(e.to_string()))),
        Ok(ClientMessage::Prompt { prompts }) => handle
            .prompt(prompts)
            .await
            .map(|ack| serde_json::to_value(ack).expect("ack"))
            .map_err(ApiError::from),
        Ok(ClientMessage::Control { verb }) => handle
            .control(verb)
            .await
            .map(|s| serde_json::json!({ "state": s }))
            .map_err(ApiError::from),
    };
    match reply {
        Ok(body) => serde_json::json!({ "v": 1, "type": "ack", "ok": true, "body": body }),
        Err(e) => serde_json::json!({ "v": 1, "type": "ack", "ok": false, "error": e.kind, "message": e.message }),
    }
}

async fn stream_events(mut socket: WebSocket, handle: Arc<SessionHandle>, mut next: u64) {
    let mut tick = handle.log.subscribe();
    loop {
        match handle.log.read_from(next) {
            Replay::Events(evs) => {
                for ev in evs {
                    if socket.send(Message::Text(ev.to_string().into())).await.is_err() {
                        return;
                    }
                    next += 1;
                }
            }
            Replay::Evicted(oldest) => {
                let msg = serde_json::json!({
                    "v": 1, "type": "error", "kind": "evicted",
                    "message": format!("events before {oldest} are no longer buffered"),
                });
                let _ = socket.send(Message::Text(msg.to_string().into())).await;
                next = oldest;
                continue;
            }
        }
        if handle.log.is_closed() && next >= handle.log.len() {
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
        tokio::select! {
            changed = tick.changed() => {
                if changed.is_err() {
                    return;
                }
            }
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let reply = client_reply(&handle, &text).await;
                    if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
                        return;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            // wake periodically in case a close raced the subscription
            _ = tokio::time::sleep(Duration::from_millis(500)) => {}
        }
    }
}
