//! HTTP routes: `/stream` (websocket) and `/healthz`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use streampca::{PipelineConfig, PointId};
use tokio::net::TcpListener;

use crate::error::Result;
use crate::focus::session_focus;
use crate::hub::{spawn_pipeline, Frame, FrameReceiver};
use crate::protocol::{ack_message, error_message, snapshot_message, ClientMessage, TrackingSelection};
use crate::source::Source;

#[derive(Clone)]
pub struct AppState {
    frames: FrameReceiver,
    sessions: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(frames: FrameReceiver) -> Self {
        Self {
            frames,
            sessions: Arc::new(AtomicU64::new(0)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/stream", get(stream))
        .route("/healthz", get(healthz))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub source: Source,
    pub pipeline: PipelineConfig,
}

/// Runs the pipeline, the source and the HTTP server until the server stops.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let (events, frames, _writer) = spawn_pipeline(config.pipeline)?;
    let listener = TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let source = config.source;
    tokio::spawn(async move {
        if let Err(e) = source.run(events).await {
            tracing::error!(error = %e, "source stopped");
        }
    });
    axum::serve(listener, router(AppState::new(frames))).await?;
    Ok(())
}

#[derive(Serialize)]
struct Health {
    seq: u64,
    stored: usize,
}

async fn healthz(State(state): State<AppState>) -> impl IntoResponse {
    let health = match state.frames.borrow().as_deref() {
        Some(f) => Health {
            seq: f.seq,
            stored: f.stored,
        },
        None => Health { seq: 0, stored: 0 },
    };
    Json(health)
}

async fn stream(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    let id = state.sessions.fetch_add(1, Ordering::Relaxed) + 1;
    ws.on_upgrade(move |socket| Session::new(id, socket).run(state.frames))
}

struct Session {
    id: u64,
    socket: WebSocket,
    selection: TrackingSelection,
    last_acked: u64,
    /// Latest frame seen; the only snapshot this session holds.
    current: Option<Arc<Frame>>,
}

impl Session {
    fn new(id: u64, socket: WebSocket) -> Self {
        Self {
            id,
            socket,
            selection: TrackingSelection::default(),
            last_acked: 0,
            current: None,
        }
    }

    fn seq(&self) -> u64 {
        self.current.as_ref().map_or(0, |f| f.seq)
    }

    async fn send(&mut self, text: String) -> bool {
        self.socket.send(Message::Text(text.into())).await.is_ok()
    }

    async fn send_current(&mut self) -> bool {
        let Some(frame) = self.current.clone() else {
            return true;
        };
        let focus = session_focus(&frame.snapshot, &self.selection);
        self.send(snapshot_message(&frame, focus.as_ref())).await
    }

    async fn run(mut self, mut frames: FrameReceiver) {
        tracing::debug!(session = self.id, "connected");
        self.current = frames.borrow_and_update().clone();
        let mut open = self.send_current().await;
        let mut live = true;
        while open {
            tokio::select! {
                changed = frames.changed(), if live => {
                    if changed.is_err() {
                        live = false;
                        continue;
                    }
                    let latest = frames.borrow_and_update().clone();
                    if latest.is_some() {
                        self.current = latest;
                        open = self.send_current().await;
                    }
                }
                incoming = self.socket.recv() => {
                    open = match incoming {
                        Some(Ok(Message::Text(text))) => self.handle(text.as_str()).await,
                        Some(Ok(Message::Close(_))) | None | Some(Err(_)) => false,
                        Some(Ok(_)) => true,
                    };
                }
            }
        }
        tracing::debug!(session = self.id, last_acked = self.last_acked, "disconnected");
    }

    async fn handle(&mut self, text: &str) -> bool {
        let message = match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => m,
            Err(e) => return self.send(error_message(self.seq(), &e.to_string())).await,
        };
        match message {
            ClientMessage::Ack { seq } => {
                self.last_acked = self.last_acked.max(seq);
                true
            }
            ClientMessage::Select { seq, mode, ids } => {
                let (known, unknown): (Vec<PointId>, Vec<PointId>) = ids
                    .into_iter()
                    .partition(|id| self.current.as_ref().is_some_and(|f| f.snapshot.contains(id)));
                if mode.tracks_selection() && known.is_empty() {
                    return self.send(error_message(seq, "selection has no displayed points")).await;
                }
                self.selection = TrackingSelection {
                    mode,
                    ids: known.into_iter().collect(),
                    issued_seq: seq,
                };
                let ack = ack_message(&self.selection, &unknown);
                self.send(ack).await && self.send_current().await
            }
        }
    }
}
