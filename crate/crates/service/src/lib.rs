//! Session service: HTTP control endpoints and a WebSocket event stream
//! over pipeline sessions, one worker thread per session.
//!
//! Endpoints:
//! - `POST /sessions` create a session (`{"config": {...}, "source": {...}}`)
//! - `GET /sessions/{id}` state, frame cursor, instance ids
//! - `POST /sessions/{id}/prompts` initial prompts or mid-stream additions
//! - `POST /sessions/{id}/control` `{"verb": "pause" | "resume" | "stop"}`
//! - `GET /sessions/{id}/events?after=N` WebSocket stream of `"v": 1` events
//! - `POST /sessions/{id}/frames` upload a PNG frame; `/frames/end` closes
//! - `GET /sessions/{id}/frames/{index}` a recently processed frame as PNG
//! - `GET /health`

mod api;
pub mod events;
pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub use api::router;
pub use events::{Event, EventBody, EventLog, EVENT_VERSION};
pub use session::{ControlVerb, CreateSession, PromptAck, SessionHandle, SessionInfo, SessionState, SourceSpec};
use tapseg_core::config::ServiceSection;
use tapseg_core::{Error, Result};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceSection,
    seed: Option<u64>,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    pub fn new(config: ServiceSection) -> Self {
        Self::with_seed(config, None)
    }

    /// Like [`new`](Self::new), but every session's seeds are replaced by `seed`.
    pub fn with_seed(config: ServiceSection, seed: Option<u64>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                seed,
                sessions: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.inner.sessions.lock().expect("sessions lock").get(id).cloned()
    }

    pub async fn create(&self, mut req: CreateSession) -> Result<Arc<SessionHandle>> {
        if let Some(seed) = self.inner.seed {
            req.config.set_seed(seed);
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let cfg = self.inner.config.clone();
        let handle = tokio::task::spawn_blocking({
            let id = id.clone();
            move || SessionHandle::start(id, req, &cfg.results_dir, cfg.media_root.as_deref(), cfg.event_buffer)
        })
        .await
        .map_err(|e| Error::invalid(e.to_string()))??;
        self.inner
            .sessions
            .lock()
            .expect("sessions lock")
            .insert(id, handle.clone());
        Ok(handle)
    }

    /// Stop every session after its in-flight frame and join the workers.
    pub async fn shutdown(&self) {
        let all: Vec<Arc<SessionHandle>> = self.inner.sessions.lock().expect("sessions lock").values().cloned().collect();
        let _ = tokio::task::spawn_blocking(move || {
            for s in all {
                s.shutdown();
            }
        })
        .await;
    }
}

/// Serve until `shutdown` resolves, then stop all sessions.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    state.shutdown().await;
    Ok(())
}
