//! Live-run server: WebSocket clients join a lobby, receive node ids and play
//! the session protocol. Each run is driven by one task that owns its
//! [`Session`](netcoord_core::session::Session); connections only forward
//! frames to it, so a run's state changes are serialized.
//!
//! Routes: `GET /ws` (one JSON message per text frame) and `GET /health`.

pub mod bot;
mod run;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use netcoord_core::engine::{RunConfig, RunLog};
use netcoord_core::session::{error_message, ConnId, ErrorCode, Event, SessionMessage, SessionOptions};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};

pub use run::RunInput;

pub const BIND_ENV: &str = "NETCOORD_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("run `{0}` already exists")]
    DuplicateRun(String),
    #[error("run id `{0}` may only contain letters, digits, `-`, `_` and `.`")]
    BadRunId(String),
    #[error("log file {0} already exists")]
    LogExists(PathBuf),
    #[error("no run `{0}`")]
    UnknownRun(String),
    #[error(transparent)]
    Core(#[from] netcoord_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ServerError> = std::result::Result<T, E>;

/// Bind address from `NETCOORD_BIND`, or the default.
pub fn bind_address() -> String {
    std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string())
}

/// Observable state of one run, refreshed after every event.
#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub run_id: String,
    pub phase: &'static str,
    pub trial: Option<u32>,
    pub n: usize,
    pub joined: usize,
    pub connected: usize,
    pub aborted: Option<String>,
    pub log_path: PathBuf,
    /// The full log once the run is done.
    #[serde(skip)]
    pub log: Option<Arc<RunLog>>,
}

impl RunView {
    pub fn is_done(&self) -> bool {
        self.phase == "done"
    }
}

struct RunHandle {
    input: mpsc::UnboundedSender<RunInput>,
    view: watch::Receiver<RunView>,
}

struct Inner {
    log_dir: PathBuf,
    runs: Mutex<BTreeMap<String, RunHandle>>,
    next_conn: AtomicU64,
}

#[derive(Clone)]
pub struct Server {
    inner: Arc<Inner>,
}

impl Server {
    /// Run logs are written to `<log_dir>/<run_id>.jsonl`.
    pub fn new(log_dir: impl Into<PathBuf>) -> Self {
        Server {
            inner: Arc::new(Inner {
                log_dir: log_dir.into(),
                runs: Mutex::new(BTreeMap::new()),
                next_conn: AtomicU64::new(1),
            }),
        }
    }

    pub fn log_dir(&self) -> &Path {
        &self.inner.log_dir
    }

    /// Opens a lobby for `config`. Must be called inside a Tokio runtime.
    /// Rejoin tokens are always drawn from OS randomness.
    pub fn open_run(&self, config: RunConfig, mut options: SessionOptions) -> Result<RunView> {
        let id = config.run_id.clone();
        let id_ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !id_ok || id.starts_with('.') {
            return Err(ServerError::BadRunId(id));
        }
        let mut runs = self.inner.runs.lock().expect("run registry lock");
        if runs.contains_key(&id) {
            return Err(ServerError::DuplicateRun(id));
        }
        let log_path = self.inner.log_dir.join(format!("{id}.jsonl"));
        if log_path.exists() {
            return Err(ServerError::LogExists(log_path));
        }
        std::fs::create_dir_all(&self.inner.log_dir)?;
        options.token_seed = rand::random();
        let (input, view) = run::spawn(config, options, log_path)?;
        let current = view.borrow().clone();
        runs.insert(id, RunHandle { input, view });
        Ok(current)
    }

    pub fn runs(&self) -> Vec<RunView> {
        let runs = self.inner.runs.lock().expect("run registry lock");
        runs.values().map(|h| h.view.borrow().clone()).collect()
    }

    pub fn run(&self, run_id: &str) -> Option<RunView> {
        let runs = self.inner.runs.lock().expect("run registry lock");
        runs.get(run_id).map(|h| h.view.borrow().clone())
    }

    /// Resolves once the run reaches Done.
    pub async fn wait_done(&self, run_id: &str) -> Result<RunView> {
        let mut rx = {
            let runs = self.inner.runs.lock().expect("run registry lock");
            runs.get(run_id)
                .ok_or_else(|| ServerError::UnknownRun(run_id.to_string()))?
                .view
                .clone()
        };
        let view = rx
            .wait_for(RunView::is_done)
            .await
            .map_err(|_| ServerError::UnknownRun(run_id.to_string()))?
            .clone();
        Ok(view)
    }

    fn sender(&self, run_id: &str) -> Option<mpsc::UnboundedSender<RunInput>> {
        let runs = self.inner.runs.lock().expect("run registry lock");
        runs.get(run_id).map(|h| h.input.clone())
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/health", get(health))
            .with_state(self.clone())
    }

    /// Serves until the listener fails.
    pub async fn serve(&self, listener: TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }

    /// Binds `addr` and serves in a background task; returns the bound address.
    pub async fn spawn(&self, addr: &str) -> std::io::Result<SocketAddr> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        let server = self.clone();
        tokio::spawn(async move {
            if let Err(e) = server.serve(listener).await {
                log::error!("server stopped: {e}");
            }
        });
        Ok(local)
    }

    async fn connection(self, socket: WebSocket) {
        let conn: ConnId = self.inner.next_conn.fetch_add(1, Ordering::Relaxed);
        let (mut sink, mut stream) = socket.split();
        let (tx, mut rx) = mpsc::unbounded_channel::<SessionMessage>();
        let writer = tokio::spawn(async move {
            while let Some(m) = rx.recv().await {
                if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                    break;
                }
            }
        });

        let mut bound: Option<mpsc::UnboundedSender<RunInput>> = None;
        while let Some(Ok(frame)) = stream.next().await {
            let text = match frame {
                Message::Text(t) => t,
                Message::Binary(_) => {
                    let _ = tx.send(error_message("", ErrorCode::Malformed, "send JSON text frames"));
                    continue;
                }
                Message::Close(_) => break,
                _ => continue,
            };
            let message = match SessionMessage::from_json(text.as_str()) {
                Ok(m) => m,
                Err(e) => {
                    let _ = tx.send(error_message("", ErrorCode::Malformed, e.to_string()));
                    continue;
                }
            };
            if bound.is_none() {
                match self.sender(&message.run_id) {
                    Some(s) => {
                        let _ = s.send(RunInput::Attach {
                            conn,
                            outbox: tx.clone(),
                        });
                        bound = Some(s);
                    }
                    None => {
                        let reply = error_message(&message.run_id, ErrorCode::UnknownRun, "no such run");
                        let _ = tx.send(reply);
                        continue;
                    }
                }
            }
            if let Some(s) = &bound {
                let _ = s.send(RunInput::Event(Event::Message { conn, message }));
            }
        }
        if let Some(s) = bound {
            let _ = s.send(RunInput::Event(Event::Disconnect { conn }));
        }
        drop(tx);
        let _ = writer.await;
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(server): State<Server>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| server.connection(socket))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    runs: Vec<RunView>,
}

async fn health(State(server): State<Server>) -> Json<impl Serialize> {
    Json(Health {
        status: "ok",
        runs: server.runs(),
    })
}
