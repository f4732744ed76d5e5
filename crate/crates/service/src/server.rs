//! WebSocket transport and health endpoint.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use handrub_core::vision::BackendDescriptor;
use handrub_core::EngineConfig;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::connection::{coalesce_frames, ClassifierFactory, Connection, Reply};
use crate::protocol::{Inbound, PROTOCOL_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub engine: EngineConfig,
    /// Send Scores messages unless the client's hello says otherwise.
    pub debug_scores: bool,
    /// Queued frames tolerated before older ones are dropped.
    pub frame_backlog: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8787".into(),
            engine: EngineConfig::default(),
            debug_scores: false,
            frame_backlog: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub version: String,
    pub server: String,
    pub active_sessions: usize,
    pub classifier: BackendDescriptor,
}

pub struct AppState {
    config: ServiceConfig,
    factory: ClassifierFactory,
    descriptor: BackendDescriptor,
    active: AtomicUsize,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig, factory: ClassifierFactory) -> Arc<Self> {
        let descriptor = factory().descriptor();
        Arc::new(Self {
            config,
            factory,
            descriptor,
            active: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    pub fn health(&self) -> Health {
        Health {
            version: PROTOCOL_VERSION.into(),
            server: env!("CARGO_PKG_VERSION").into(),
            active_sessions: self.active_sessions(),
            classifier: self.descriptor.clone(),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on {addr} (ws /ws, GET /healthz)");
    }
    axum::serve(listener, router(state)).await
}

pub async fn bind(config: &ServiceConfig) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(&config.listen).await?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(state.health())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_connection(socket, state))
}

struct ActiveGuard(Arc<AppState>);

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn run_connection(socket: WebSocket, state: Arc<AppState>) {
    state.active.fetch_add(1, Ordering::SeqCst);
    let _guard = ActiveGuard(state.clone());
    let id = format!("conn-{:04}", state.next_id.fetch_add(1, Ordering::SeqCst));
    log::info!("{id}: connected");

    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Result<Inbound, String>>();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let parsed = match msg {
                Message::Text(t) => Inbound::parse(t.as_str()),
                Message::Binary(_) => Err("binary messages are not part of hh/1".into()),
                Message::Close(_) => break,
                _ => continue,
            };
            if tx.send(parsed).is_err() {
                break;
            }
        }
    });

    let mut conn = Connection::new(
        id.clone(),
        state.factory.clone(),
        state.config.engine.clone(),
        state.config.debug_scores,
    );
    'outer: while let Some(first) = rx.recv().await {
        let mut batch = vec![first];
        while let Ok(m) = rx.try_recv() {
            batch.push(m);
        }
        let (batch, dropped) = coalesce_frames(batch, state.config.frame_backlog);
        if dropped > 0 {
            log::debug!("{id}: decoder behind, dropped {dropped} frames");
            conn.note_dropped_frames(dropped);
        }
        // decoding and classification run off the async workers
        let joined = tokio::task::spawn_blocking(move || {
            let replies: Vec<Reply> = batch
                .into_iter()
                .map(|m| match m {
                    Ok(m) => conn.handle(m),
                    Err(e) => conn.handle_malformed(e),
                })
                .collect();
            (conn, replies)
        })
        .await;
        let replies;
        (conn, replies) = match joined {
            Ok(v) => v,
            Err(e) => {
                log::error!("{id}: engine task failed: {e}");
                break;
            }
        };
        for reply in replies {
            for m in &reply.messages {
                if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                    break 'outer;
                }
            }
            if reply.close {
                let _ = sink.send(Message::Close(None)).await;
                break 'outer;
            }
        }
    }
    reader.abort();
    log::info!("{id}: closed");
}
