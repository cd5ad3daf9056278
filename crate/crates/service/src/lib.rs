//! Streaming locomotion service. Each websocket connection owns one
//! generation session; checkpoints are loaded once and shared.

pub mod protocol;
mod registry;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};

pub use protocol::{ClientMessage, JointInfo, ServerMessage};
pub use registry::Registry;
pub use session::{error_code, Connection, DEFAULT_PATH};

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub checkpoint_dir: PathBuf,
    pub max_sessions: usize,
    pub frame_rate: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            checkpoint_dir: PathBuf::from("checkpoints"),
            max_sessions: 16,
            frame_rate: 30.0,
        }
    }
}

pub struct AppState {
    pub registry: Registry,
    pub max_sessions: usize,
    pub frame_rate: f64,
    active: AtomicUsize,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(registry: Registry, max_sessions: usize, frame_rate: f64) -> Arc<Self> {
        Arc::new(Self {
            registry,
            max_sessions,
            frame_rate,
            active: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

fn encode(m: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(m).expect("messages serialize").into())
}

async fn connection(socket: WebSocket, state: Arc<AppState>) {
    let (mut tx, mut rx) = socket.split();
    let slot = state.active.fetch_add(1, Ordering::SeqCst);
    if slot >= state.max_sessions {
        state.active.fetch_sub(1, Ordering::SeqCst);
        let m = ServerMessage::error("TooManySessions", format!("limit is {}", state.max_sessions));
        let _ = tx.send(encode(&m)).await;
        let _ = tx.close().await;
        return;
    }
    let id = state.next_id.fetch_add(1, Ordering::SeqCst);
    let mut conn = Connection::new(&state.registry, state.frame_rate, id);
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let replies = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Close) => break,
            Ok(m) => conn.handle(m),
            Err(e) => vec![ServerMessage::error("BadMessage", e.to_string())],
        };
        for r in &replies {
            if tx.send(encode(r)).await.is_err() {
                break;
            }
        }
    }
    drop(conn);
    state.active.fetch_sub(1, Ordering::SeqCst);
    log::debug!("session {id} closed");
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve_listener(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve(config: ServiceConfig) -> qmotion::Result<()> {
    let registry = Registry::load_dir(&config.checkpoint_dir)?;
    let state = AppState::new(registry, config.max_sessions, config.frame_rate);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    log::info!("listening on ws://{}/ws", listener.local_addr()?);
    serve_listener(listener, state).await?;
    Ok(())
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn run_blocking(config: ServiceConfig) -> qmotion::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(config))
}
