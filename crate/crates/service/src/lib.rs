//! Live session service: HTTP for control, WebSockets for frame ingest and
//! event streams.

pub mod event;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use handcue_core::config::{Settings, SettingsError};
use handcue_core::pipeline::DispatchMode;
use handcue_core::router::Command;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tracing::{info, warn};

pub use event::{Event, EventKind, Stage};
pub use session::{FrameFlow, SessionError, SessionHandle, Shared, Verdict};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
    sessions: Arc<RwLock<HashMap<String, SessionHandle>>>,
}

impl AppState {
    pub fn new(settings: Settings) -> Result<Self, SettingsError> {
        let shared = Shared {
            interpreter: Arc::new(settings.interpreter()?),
            registry: Arc::new(settings.registry()?),
            settings,
        };
        Ok(Self {
            shared: Arc::new(shared),
            sessions: Arc::default(),
        })
    }

    /// Opens a session; must run inside a tokio runtime.
    pub fn create_session(&self, mode: DispatchMode) -> SessionHandle {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let handle = SessionHandle::spawn(id.clone(), mode, self.shared.clone());
        self.sessions.write().unwrap().insert(id, handle.clone());
        handle
    }

    pub fn session(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().unwrap().get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/frames", get(frames_ws))
        .route("/v1/sessions/{id}/events", get(events_ws))
        .route("/v1/sessions/{id}/commands/{cmd_id}", post(resolve_command))
        .with_state(state)
}

/// Binds the configured address and serves until ctrl-c.
pub async fn serve(settings: Settings) -> Result<(), ServeError> {
    let addr = settings.service.bind.clone();
    let state = AppState::new(settings)?;
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    info!(addr = %listener.local_addr()?, "session service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Serves on an already bound listener, for tests and embedding.
pub async fn serve_on(listener: TcpListener, state: AppState) -> std::io::Result<SocketAddr> {
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(state)).await {
            warn!(error = %e, "server stopped");
        }
    });
    Ok(addr)
}

fn problem(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    mode: Option<DispatchMode>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Response {
    let req = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession { mode: None }
    } else {
        match serde_json::from_slice::<CreateSession>(&body) {
            Ok(r) => r,
            Err(e) => {
                return problem(
                    StatusCode::BAD_REQUEST,
                    format!("invalid session request ({e}); mode must be \"confirm\" or \"auto\""),
                )
            }
        }
    };
    let mode = req.mode.unwrap_or(state.shared.settings.service.mode);
    let handle = state.create_session(mode);
    (StatusCode::CREATED, Json(json!({ "id": handle.id, "mode": mode }))).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum VerdictKind {
    Confirm,
    Override,
    Reject,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Resolution {
    verdict: VerdictKind,
    #[serde(default)]
    command: Option<Command>,
}

async fn resolve_command(
    State(state): State<AppState>,
    Path((id, cmd_id)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let Some(session) = state.session(&id) else {
        return problem(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    let res: Resolution = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return problem(StatusCode::BAD_REQUEST, format!("invalid verdict: {e}")),
    };
    let verdict = match (res.verdict, res.command) {
        (VerdictKind::Confirm, None) => Verdict::Confirm,
        (VerdictKind::Reject, None) => Verdict::Reject,
        (VerdictKind::Override, Some(cmd)) => Verdict::Override(cmd),
        (VerdictKind::Override, None) => {
            return problem(StatusCode::BAD_REQUEST, "override needs a replacement command")
        }
        (_, Some(_)) => {
            return problem(StatusCode::BAD_REQUEST, "only override takes a command")
        }
    };
    match session.resolve(cmd_id, verdict).await {
        Ok(event) => Json(event).into_response(),
        Err(e @ SessionError::UnknownCommandId(_)) => problem(StatusCode::NOT_FOUND, e),
        Err(e) => problem(StatusCode::GONE, e),
    }
}

async fn frames_ws(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Response {
    let Some(session) = state.session(&id) else {
        return problem(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    ws.on_upgrade(move |socket| pump_frames(socket, session))
}

async fn pump_frames(mut socket: WebSocket, session: SessionHandle) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        // A message may carry several NDJSON lines.
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match session.ingest(line.to_string()).await {
                Ok(FrameFlow::Continue) => {}
                Ok(FrameFlow::Close) | Err(_) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

async fn events_ws(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    let Some(session) = state.session(&id) else {
        return problem(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    ws.on_upgrade(move |socket| pump_events(socket, session, q.since))
}

async fn pump_events(mut socket: WebSocket, session: SessionHandle, since: Option<u64>) {
    let Ok(mut events) = session.subscribe(since).await else {
        return;
    };
    loop {
        tokio::select! {
            event = events.recv() => {
                let Some(event) = event else { break };
                let text = serde_json::to_string(&event).expect("events serialize");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                match incoming {
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    _ => {}
                }
            }
        }
    }
}
