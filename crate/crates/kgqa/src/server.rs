//! HTTP session service.
//!
//! Each session runs on its own thread. Its event log is appended by the
//! session loop and read by any number of long-polling clients; a posted
//! clarification is handed to the suspended loop over a channel.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgqa_core::dialogue::{run_session, Clarifier, EventKind, SessionEnv, SessionEvent, SessionStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;
use tracing::{info, warn};

use crate::config::ServerSection;

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("no session {id}"))
}

struct Log {
    events: Vec<SessionEvent>,
    status: SessionStatus,
}

struct Slot {
    question: String,
    log: Mutex<Log>,
    latest: watch::Sender<u64>,
    replies: Sender<String>,
}

impl Slot {
    fn record(&self, event: &SessionEvent) {
        let mut log = self.log.lock().expect("session log poisoned");
        match event.kind {
            EventKind::ClarificationRequest => log.status = SessionStatus::AwaitingClarification,
            EventKind::ClarificationResponse => log.status = SessionStatus::Running,
            EventKind::FinalAnswer => log.status = SessionStatus::Finished,
            EventKind::Error => log.status = SessionStatus::Failed,
            _ => {}
        }
        log.events.push(event.clone());
        drop(log);
        self.latest.send_replace(event.seq);
    }
}

/// Waits for the response posted over HTTP.
struct ChannelClarifier {
    replies: Receiver<String>,
    timeout: Duration,
}

impl Clarifier for ChannelClarifier {
    fn respond(&mut self, _request: &str) -> Result<String, String> {
        match self.replies.recv_timeout(self.timeout) {
            Ok(text) => Ok(text),
            Err(RecvTimeoutError::Timeout) => Err("no clarification received in time".into()),
            Err(RecvTimeoutError::Disconnected) => Err("clarification channel closed".into()),
        }
    }
}

pub struct Hub {
    env: SessionEnv,
    settings: ServerSection,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl Hub {
    pub fn new(env: SessionEnv, settings: ServerSection) -> Arc<Self> {
        Arc::new(Self { env, settings, sessions: Mutex::new(HashMap::new()) })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions.lock().expect("session table poisoned").get(id).cloned().ok_or_else(|| not_found(id))
    }

    /// Starts a session in the background and returns its id.
    pub fn create(&self, question: &str) -> Result<String, ApiError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(ApiError(StatusCode::BAD_REQUEST, "question must be non-empty".into()));
        }
        let id = uuid::Uuid::new_v4().to_string();
        let (tx, rx) = mpsc::channel();
        let slot = Arc::new(Slot {
            question: question.to_string(),
            log: Mutex::new(Log { events: Vec::new(), status: SessionStatus::Running }),
            latest: watch::channel(0).0,
            replies: tx,
        });
        self.sessions.lock().expect("session table poisoned").insert(id.clone(), slot.clone());

        let env = self.env.clone();
        let mut clarifier = ChannelClarifier {
            replies: rx,
            timeout: Duration::from_secs(self.settings.clarification_timeout_secs),
        };
        let sink = slot.clone();
        let session_id = id.clone();
        std::thread::Builder::new()
            .name(format!("session-{}", &id[..8]))
            .spawn(move || {
                let listener = Arc::new(move |e: &SessionEvent| sink.record(e));
                let t = run_session(&slot.question, &env, &mut clarifier, None, Some(listener));
                info!(session = %session_id, status = %t.session.status, "session ended");
            })
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("spawning session: {e}")))?;
        Ok(id)
    }

    /// Events after `after`, waiting up to `wait` for new ones while the
    /// session is still live.
    pub async fn events(&self, id: &str, after: u64, wait: Duration) -> Result<EventsResponse, ApiError> {
        let slot = self.slot(id)?;
        let mut rx = slot.latest.subscribe();
        let terminal = |s: SessionStatus| matches!(s, SessionStatus::Finished | SessionStatus::Failed);
        let live = !terminal(slot.log.lock().expect("session log poisoned").status);
        let wait = wait.min(Duration::from_millis(self.settings.max_wait_ms));
        if live && !wait.is_zero() {
            let _ = tokio::time::timeout(wait, rx.wait_for(|&seq| seq > after)).await;
        }
        let log = slot.log.lock().expect("session log poisoned");
        let events = log.events.iter().filter(|e| e.seq > after).cloned().collect();
        Ok(EventsResponse { events, status: log.status })
    }

    pub fn clarify(&self, id: &str, text: &str) -> Result<(), ApiError> {
        let slot = self.slot(id)?;
        if text.trim().is_empty() {
            return Err(ApiError(StatusCode::BAD_REQUEST, "clarification text must be non-empty".into()));
        }
        let mut log = slot.log.lock().expect("session log poisoned");
        if log.status != SessionStatus::AwaitingClarification {
            return Err(ApiError(StatusCode::CONFLICT, format!("session is {}, not awaiting clarification", log.status)));
        }
        // claim the pending request so a second post conflicts
        log.status = SessionStatus::Running;
        slot.replies.send(text.to_string()).map_err(|_| {
            warn!(session = id, "clarification for a session that already ended");
            ApiError(StatusCode::CONFLICT, "session has ended".into())
        })
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary, ApiError> {
        let slot = self.slot(id)?;
        let log = slot.log.lock().expect("session log poisoned");
        Ok(SessionSummary {
            id: id.to_string(),
            question: slot.question.clone(),
            status: log.status,
            last_seq: log.events.last().map_or(0, |e| e.seq),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventsResponse {
    pub events: Vec<SessionEvent>,
    pub status: SessionStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub question: String,
    pub status: SessionStatus,
    pub last_seq: u64,
}

#[derive(Deserialize)]
struct CreateBody {
    #[serde(default)]
    question: String,
}

#[derive(Deserialize)]
struct ClarifyBody {
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    #[serde(default)]
    wait_ms: u64,
}

async fn create(State(hub): State<Arc<Hub>>, Json(body): Json<CreateBody>) -> Result<Json<serde_json::Value>, ApiError> {
    let id = hub.create(&body.question)?;
    Ok(Json(json!({ "id": id })))
}

async fn events(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<EventsResponse>, ApiError> {
    Ok(Json(hub.events(&id, q.after, Duration::from_millis(q.wait_ms)).await?))
}

async fn clarify(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    Json(body): Json<ClarifyBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    hub.clarify(&id, &body.text)?;
    Ok(Json(json!({ "ok": true })))
}

async fn summary(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(hub.summary(&id)?))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "ok": true }))
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/clarification", post(clarify))
        .with_state(hub)
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(hub: Arc<Hub>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(hub))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
