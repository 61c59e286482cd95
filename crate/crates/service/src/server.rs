//! HTTP and web-socket front end. `GET /routes`, `GET /routes/{id}` and `GET /ws`.

use std::collections::BTreeMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use nav_core::instructor::Landmark;
use nav_core::metrics::{read_log, write_log};
use nav_core::route::{load_route_file, Route};
use tokio::net::TcpListener;
use tokio::time::MissedTickBehavior;

use crate::protocol::{parse_client, ClientBody, ErrorMsg, Hello, ServerBody, ServerMessage};
use crate::session::{Phase, Session, SessionConfig, SessionError, SessionMode};

pub const BIND_ENV: &str = "NAV_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8787";

pub fn bind_from_env() -> String {
    std::env::var(BIND_ENV).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| DEFAULT_BIND.to_string())
}

/// Immutable data shared by every session.
pub struct AppState {
    pub routes: BTreeMap<String, Arc<Route>>,
    pub landmarks: Arc<Vec<Landmark>>,
    pub session: SessionConfig,
    /// Finished sessions write `<id>.jsonl` and `<id>.record.json` here.
    pub out_dir: Option<PathBuf>,
    next_id: AtomicU64,
    shutdown: tokio::sync::watch::Sender<bool>,
}

impl AppState {
    pub fn new(
        routes: BTreeMap<String, Arc<Route>>,
        landmarks: Vec<Landmark>,
        session: SessionConfig,
        out_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            routes,
            landmarks: Arc::new(landmarks),
            session,
            out_dir,
            next_id: AtomicU64::new(1),
            shutdown: tokio::sync::watch::Sender::new(false),
        }
    }

    fn open(&self, hello: &Hello) -> Result<(Session, Option<Duration>), SessionError> {
        let route = self.routes.get(&hello.route).ok_or_else(|| SessionError::UnknownRoute(hello.route.clone()))?;
        let id = format!("s{:04}-{}-{}", self.next_id.fetch_add(1, Ordering::Relaxed), hello.route, hello.condition);
        let real_period = Duration::from_secs_f64(1.0 / self.session.tick_hz);
        match hello.mode {
            SessionMode::Interactive => {
                let s = Session::interactive(
                    id,
                    route.clone(),
                    self.landmarks.clone(),
                    hello.condition,
                    hello.seed,
                    &self.session,
                );
                Ok((s, Some(real_period)))
            }
            SessionMode::Replay => {
                let text = hello.log.as_deref().ok_or_else(|| SessionError::BadLog("replay needs a log".into()))?;
                let log = read_log(text.as_bytes()).map_err(|e| SessionError::BadLog(e.to_string()))?;
                let s = Session::replay(
                    id,
                    route.clone(),
                    self.landmarks.clone(),
                    hello.condition,
                    hello.seed,
                    &log,
                    &self.session,
                )?;
                let period = match hello.replay_speed {
                    Some(x) if x <= 0.0 => None,
                    Some(x) => Some(real_period.div_f64(x)),
                    None => Some(real_period),
                };
                Ok((s, period))
            }
        }
    }

    fn persist(&self, s: &Session) {
        let Some(dir) = &self.out_dir else { return };
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{}.jsonl", s.id)))?);
            write_log(&mut f, s.log())?;
            if let Some(r) = s.record() {
                std::fs::write(dir.join(format!("{}.record.json", s.id)), r.to_json() + "\n")?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            tracing::error!(session = %s.id, "could not write session files: {e}");
        }
    }
}

/// Loads every route file in `dir`, skipping `landmarks.json`.
pub fn load_routes_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, Arc<Route>>, String> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "landmarks.json"))
        .collect();
    paths.sort();
    let mut routes = BTreeMap::new();
    for p in paths {
        let r = load_route_file(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        routes.insert(r.id.clone(), Arc::new(r));
    }
    if routes.is_empty() {
        return Err(format!("no route files in {}", dir.display()));
    }
    Ok(routes)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/routes", get(list_routes))
        .route("/routes/{id}", get(route_file))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

/// Serves until `shutdown` resolves. Open sessions are then closed and their
/// files written before this returns.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let notify = state.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            shutdown.await;
            notify.shutdown.send_replace(true);
        })
        .await
}

async fn list_routes(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.routes.keys().cloned().collect())
}

async fn route_file(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match state.routes.get(&id) {
        Some(r) => ([(header::CONTENT_TYPE, "application/json")], r.to_document_json()).into_response(),
        None => (StatusCode::NOT_FOUND, format!("unknown route {id:?}")).into_response(),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| run_socket(socket, state))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

async fn fail(socket: &mut WebSocket, err: ErrorMsg) {
    let code = err.code.close_code();
    let reason = err.message.chars().take(100).collect::<String>();
    let _ = send(socket, &ServerMessage::new(ServerBody::Error(err))).await;
    let _ = socket.send(Message::Close(Some(CloseFrame { code, reason: reason.into() }))).await;
}

async fn close_normally(socket: &mut WebSocket) {
    let _ = socket.send(Message::Close(Some(CloseFrame { code: 1000, reason: "run ended".into() }))).await;
}

fn session_error(e: &SessionError) -> ErrorMsg {
    match e.to_message().body {
        ServerBody::Error(m) => m,
        _ => unreachable!("to_message builds an error frame"),
    }
}

/// Frames from the client until the hello arrives.
async fn await_hello(socket: &mut WebSocket) -> Option<Result<Hello, ErrorMsg>> {
    loop {
        match socket.recv().await? {
            Ok(Message::Text(text)) => {
                return Some(match parse_client(&text) {
                    Ok(ClientBody::Hello(h)) => Ok(h),
                    Ok(_) => Err(session_error(&SessionError::Protocol("first message must be hello".into()))),
                    Err(e) => Err(e),
                })
            }
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

async fn run_socket(mut socket: WebSocket, state: Arc<AppState>) {
    let hello = match await_hello(&mut socket).await {
        None => return,
        Some(Err(e)) => return fail(&mut socket, e).await,
        Some(Ok(h)) => h,
    };
    let (mut session, period) = match state.open(&hello) {
        Ok(s) => s,
        Err(e) => return fail(&mut socket, session_error(&e)).await,
    };
    tracing::info!(session = %session.id, mode = ?session.mode(), "session opened");
    let mut stopping = state.shutdown.subscribe();
    let mut interval = period.map(|p| {
        let mut iv = tokio::time::interval(p);
        iv.set_missed_tick_behavior(MissedTickBehavior::Delay);
        iv
    });

    loop {
        let running = session.phase() == Phase::Running;
        tokio::select! {
            _ = stopping.changed() => {
                let _ = socket
                    .send(Message::Close(Some(CloseFrame { code: 1001, reason: "server shutting down".into() })))
                    .await;
                break;
            }
            _ = async {
                match interval.as_mut() {
                    Some(iv) => { iv.tick().await; }
                    None => tokio::task::yield_now().await,
                }
            }, if running => {
                // remote model calls block; keep them off the async workers
                let out = tokio::task::block_in_place(|| session.tick());
                match out {
                    Ok(msgs) => {
                        for m in &msgs {
                            if !send(&mut socket, m).await {
                                break;
                            }
                        }
                    }
                    Err(e) => {
                        fail(&mut socket, session_error(&e)).await;
                        break;
                    }
                }
                if session.phase() == Phase::Ended {
                    close_normally(&mut socket).await;
                    break;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let body = match parse_client(&text) {
                    Ok(b) => b,
                    Err(e) => {
                        fail(&mut socket, e).await;
                        break;
                    }
                };
                match session.handle(body) {
                    Ok(msgs) => {
                        for m in &msgs {
                            send(&mut socket, m).await;
                        }
                        if session.phase() == Phase::Ended {
                            close_normally(&mut socket).await;
                            break;
                        }
                    }
                    Err(e) => {
                        fail(&mut socket, session_error(&e)).await;
                        break;
                    }
                }
            }
        }
    }
    session.abandon();
    state.persist(&session);
    tracing::info!(session = %session.id, "session closed");
}
