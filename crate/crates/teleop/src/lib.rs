//! WebSocket session server. Each connected operator gets a [`Session`]
//! ticking on its own task; the socket only talks to it through channels.
//! Episode files and leaderboards are written by one shared recorder task.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use playcollect_core::robot::control::ControlInput;
use playcollect_core::scene::Level;
use playcollect_core::session::{
    parse_client_message, record_episode, Assets, ClientBody, EndReason, EpisodeEnd, ErrorCode, InputAck,
    NoticeCode, Recorded, ServerBody, ServerMessage, Session, SessionConfig,
};
use playcollect_core::task::{leaderboard_path, Leaderboard, LeaderboardEntry};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};

pub const DEFAULT_DISCONNECT_GRACE: Duration = Duration::from_secs(30);
const OUTBOX: usize = 64;
const SEND_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Ticks at wall-clock rate `dt`.
    Realtime,
    /// One tick per input message. Used for deterministic replays.
    Lockstep,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub session: SessionConfig,
    pub clock: ClockMode,
    pub disconnect_grace: Duration,
    /// Seeds for hellos without one are derived from this.
    pub seed_base: u64,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> ServerConfig {
        ServerConfig {
            data_dir: data_dir.into(),
            session: SessionConfig::default(),
            clock: ClockMode::Realtime,
            disconnect_grace: DEFAULT_DISCONNECT_GRACE,
            seed_base: 0,
        }
    }
}

type Outbox = mpsc::Sender<String>;

enum Command {
    Input(Box<ControlInput>),
    Abort,
    Reset,
    Attach(Outbox),
    Detach,
}

enum RecorderRequest {
    Record(Box<EpisodeEnd>, oneshot::Sender<Result<Option<Recorded>, String>>),
    Board(Level, oneshot::Sender<Vec<LeaderboardEntry>>),
}

struct Shared {
    assets: Assets,
    config: ServerConfig,
    sessions: Mutex<HashMap<String, mpsc::Sender<Command>>>,
    counter: AtomicU64,
    recorder: mpsc::Sender<RecorderRequest>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Starts the recorder task; must be called inside a tokio runtime.
    pub fn new(assets: Assets, config: ServerConfig) -> AppState {
        let (tx, rx) = mpsc::channel(64);
        tokio::spawn(recorder(config.data_dir.clone(), rx));
        AppState(Arc::new(Shared {
            assets,
            config,
            sessions: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
            recorder: tx,
        }))
    }

    pub fn live_sessions(&self) -> usize {
        self.0.sessions.lock().expect("session map lock").len()
    }

    pub async fn leaderboard(&self, level: Level) -> Vec<LeaderboardEntry> {
        let (tx, rx) = oneshot::channel();
        if self.0.recorder.send(RecorderRequest::Board(level, tx)).await.is_err() {
            return Vec::new();
        }
        rx.await.unwrap_or_default()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/health", get(health))
        .route("/leaderboard", get(leaderboard))
        .with_state(state)
}

/// Binds `addr` and serves until the task is dropped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

/// Serves on an already bound listener in the background and returns its
/// address.
pub fn spawn(listener: TcpListener, state: AppState) -> std::io::Result<SocketAddr> {
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        let _ = axum::serve(listener, router(state)).await;
    });
    Ok(addr)
}

async fn health(State(app): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": app.live_sessions() }))
}

#[derive(Deserialize)]
struct BoardQuery {
    difficulty: Option<String>,
}

async fn leaderboard(State(app): State<AppState>, Query(q): Query<BoardQuery>) -> Response {
    let level = match q.difficulty.as_deref().unwrap_or("easy").parse::<Level>() {
        Ok(l) => l,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    Json(serde_json::json!({ "difficulty": level, "entries": app.leaderboard(level).await })).into_response()
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, app))
}

async fn send(out: &Outbox, id: Option<&str>, body: ServerBody) {
    let droppable = matches!(body, ServerBody::State { .. });
    let text = ServerMessage::new(id, body).to_json();
    if droppable {
        // A slow client loses state frames rather than stalling the sim.
        let _ = out.try_send(text);
    } else {
        let _ = tokio::time::timeout(SEND_TIMEOUT, out.send(text)).await;
    }
}

async fn error(out: &Outbox, id: Option<&str>, code: ErrorCode, message: impl Into<String>) {
    send(out, id, ServerBody::Error { code, message: message.into() }).await;
}

async fn client(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut outbox) = mpsc::channel::<String>(OUTBOX);
    let writer = tokio::spawn(async move {
        while let Some(text) = outbox.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    let mut attached: Option<(String, mpsc::Sender<Command>)> = None;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let sid = attached.as_ref().map(|(id, _)| id.clone());
        let msg = match parse_client_message(&text) {
            Ok(m) => m,
            Err((code, message)) => {
                error(&out, sid.as_deref(), code, message).await;
                continue;
            }
        };
        match (msg.body, &attached) {
            (ClientBody::Hello { player, difficulty, seed }, None) => match difficulty.parse::<Level>() {
                Ok(level) => match start_session(&app, &out, player, level, seed).await {
                    Ok(handle) => attached = Some(handle),
                    Err(e) => error(&out, None, ErrorCode::Internal, e).await,
                },
                Err(e) => error(&out, None, ErrorCode::BadDifficulty, e.to_string()).await,
            },
            (ClientBody::Resume, None) => {
                let id = msg.session_id.unwrap_or_default();
                let tx = app.0.sessions.lock().expect("session map lock").get(&id).cloned();
                match tx {
                    Some(tx) if tx.send(Command::Attach(out.clone())).await.is_ok() => attached = Some((id, tx)),
                    _ => error(&out, None, ErrorCode::UnknownSession, format!("no paused session `{id}`")).await,
                }
            }
            (ClientBody::Hello { .. } | ClientBody::Resume, Some((id, _))) => {
                error(&out, Some(id), ErrorCode::BadMessage, "this connection already drives a session").await
            }
            (_, None) => error(&out, None, ErrorCode::NoSession, "send hello first").await,
            (body, Some((_, tx))) => {
                let cmd = match body {
                    ClientBody::Input(i) => Command::Input(Box::new(i.to_control_input())),
                    ClientBody::Abort => Command::Abort,
                    ClientBody::ResetRequest => Command::Reset,
                    ClientBody::Hello { .. } | ClientBody::Resume => unreachable!("handled above"),
                };
                if tx.send(cmd).await.is_err() {
                    break;
                }
            }
        }
    }
    if let Some((_, tx)) = attached {
        let _ = tx.send(Command::Detach).await;
    }
    drop(out);
    let _ = writer.await;
}

async fn start_session(
    app: &AppState,
    out: &Outbox,
    player: String,
    level: Level,
    seed: Option<u64>,
) -> Result<(String, mpsc::Sender<Command>), String> {
    let n = app.0.counter.fetch_add(1, Ordering::Relaxed);
    let seed = seed.unwrap_or_else(|| app.0.config.seed_base.wrapping_add(n.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let id = format!("s{n:05}-{seed:016x}");
    let session =
        Session::new(id.clone(), player, level, seed, app.0.assets.clone(), app.0.config.session.clone())
            .map_err(|e| e.to_string())?;
    send(out, Some(&id), ServerBody::Scene { scene: Box::new(session.scene().clone()) }).await;
    let (tx, rx) = mpsc::channel(256);
    app.0.sessions.lock().expect("session map lock").insert(id.clone(), tx.clone());
    let app = app.clone();
    let out = out.clone();
    tokio::spawn(async move {
        let id = session.id().to_string();
        run_session(session, rx, out, &app).await;
        app.0.sessions.lock().expect("session map lock").remove(&id);
    });
    Ok((id, tx))
}

/// Sim loop for one session. Owns the session; stops when the client is
/// gone for longer than the grace period.
async fn run_session(mut session: Session, mut rx: mpsc::Receiver<Command>, out: Outbox, app: &AppState) {
    let cfg = &app.0.config;
    let id = session.id().to_string();
    let mut client = Some(out);
    let mut pending: Option<ControlInput> = None;
    let mut interval = tokio::time::interval(Duration::from_secs_f64(session.dt()));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut detached_at: Option<Instant> = None;
    let realtime = cfg.clock == ClockMode::Realtime;

    loop {
        let deadline = detached_at.map(|t| t + cfg.disconnect_grace);
        tokio::select! {
            _ = interval.tick(), if realtime && client.is_some() => {
                if let Some(input) = pending.take() {
                    apply_input(&mut session, client.as_ref(), &id, input).await;
                }
                if !tick(&mut session, client.as_ref(), &id, app).await {
                    break;
                }
            }
            cmd = rx.recv() => match cmd {
                None => break,
                Some(Command::Input(input)) => {
                    if realtime {
                        // Last writer wins; the next tick consumes it.
                        pending = Some(*input);
                    } else {
                        apply_input(&mut session, client.as_ref(), &id, *input).await;
                        if !tick(&mut session, client.as_ref(), &id, app).await {
                            break;
                        }
                    }
                }
                Some(Command::Abort) => {
                    if let Some(end) = session.abort(EndReason::UserAbort) {
                        report_end(client.as_ref(), &id, &end, None, None).await;
                    }
                }
                Some(Command::Reset) => {
                    match session.reset_now() {
                        Ok(ended) => {
                            if let Some(end) = ended {
                                report_end(client.as_ref(), &id, &end, None, None).await;
                            }
                            if let Some(c) = client.as_ref() {
                                send(c, Some(&id), ServerBody::Scene { scene: Box::new(session.scene().clone()) }).await;
                            }
                        }
                        Err(e) => {
                            if let Some(c) = client.as_ref() {
                                error(c, Some(&id), ErrorCode::Internal, e.to_string()).await;
                            }
                        }
                    }
                }
                Some(Command::Attach(c)) => {
                    send(&c, Some(&id), ServerBody::Notice { code: NoticeCode::Resumed, message: "session resumed".into() }).await;
                    send(&c, Some(&id), ServerBody::Scene { scene: Box::new(session.scene().clone()) }).await;
                    client = Some(c);
                    detached_at = None;
                    interval.reset();
                }
                Some(Command::Detach) => {
                    client = None;
                    pending = None;
                    detached_at = Some(Instant::now());
                }
            },
            _ = tokio::time::sleep_until(deadline.unwrap_or_else(Instant::now)), if deadline.is_some() => {
                // The trajectory of an abandoned episode is discarded.
                let _ = session.abort(EndReason::Disconnected);
                break;
            }
        }
    }
}

async fn apply_input(session: &mut Session, client: Option<&Outbox>, id: &str, input: ControlInput) {
    let result = session.set_input(input);
    let Some(c) = client else { return };
    match result {
        Ok(InputAck::Accepted) => {}
        Ok(InputAck::Clamped) => send(c, Some(id), ServerBody::Notice {
            code: NoticeCode::InputClamped,
            message: "stick or trigger out of range; clamped".into(),
        }).await,
        Ok(InputAck::Ignored) => send(c, Some(id), ServerBody::Notice {
            code: NoticeCode::InputIgnored,
            message: "episode has ended; input ignored".into(),
        }).await,
        Err(e) => error(c, Some(id), ErrorCode::BadInput, e.to_string()).await,
    }
}

/// One tick plus its side effects. Returns false when the session can no
/// longer run.
async fn tick(session: &mut Session, client: Option<&Outbox>, id: &str, app: &AppState) -> bool {
    let out = match session.tick() {
        Ok(o) => o,
        Err(e) => {
            if let Some(c) = client {
                error(c, Some(id), ErrorCode::Internal, e.to_string()).await;
            }
            return false;
        }
    };
    if let Some(end) = out.episode_end {
        let level = session.level();
        let recorded = if end.success {
            let (tx, rx) = oneshot::channel();
            let _ = app.0.recorder.send(RecorderRequest::Record(Box::new(end.clone()), tx)).await;
            match rx.await {
                Ok(Ok(r)) => r,
                Ok(Err(e)) => {
                    if let Some(c) = client {
                        error(c, Some(id), ErrorCode::Internal, e).await;
                    }
                    None
                }
                Err(_) => None,
            }
        } else {
            None
        };
        let board = if end.success { Some(app.leaderboard(level).await) } else { None };
        report_end(client, id, &end, recorded.as_ref(), board.map(|b| (level, b))).await;
    }
    if let Some(c) = client {
        if out.new_scene {
            send(c, Some(id), ServerBody::Scene { scene: Box::new(session.scene().clone()) }).await;
        }
        if let Some(snapshot) = out.snapshot {
            send(c, Some(id), ServerBody::State { snapshot: Box::new(snapshot) }).await;
        }
    }
    true
}

async fn report_end(
    client: Option<&Outbox>,
    id: &str,
    end: &EpisodeEnd,
    recorded: Option<&Recorded>,
    board: Option<(Level, Vec<LeaderboardEntry>)>,
) {
    let Some(c) = client else { return };
    send(c, Some(id), ServerBody::EpisodeEnd {
        success: end.success,
        reason: end.reason,
        completion_time: end.completion_time,
        rank: recorded.and_then(|r| r.rank),
        episode_id: recorded.map(|r| r.episode_id.clone()),
    }).await;
    if let Some((difficulty, entries)) = board {
        send(c, Some(id), ServerBody::Leaderboard { difficulty, entries }).await;
    }
}

fn board_for<'a>(
    boards: &'a mut HashMap<Level, Leaderboard>,
    data_dir: &std::path::Path,
    level: Level,
) -> Result<&'a mut Leaderboard, String> {
    match boards.entry(level) {
        std::collections::hash_map::Entry::Occupied(e) => Ok(e.into_mut()),
        std::collections::hash_map::Entry::Vacant(e) => {
            Ok(e.insert(Leaderboard::load(leaderboard_path(data_dir, level)).map_err(|e| e.to_string())?))
        }
    }
}

/// The single writer for episode directories and leaderboard files.
async fn recorder(data_dir: PathBuf, mut rx: mpsc::Receiver<RecorderRequest>) {
    let mut boards: HashMap<Level, Leaderboard> = HashMap::new();
    while let Some(req) = rx.recv().await {
        match req {
            RecorderRequest::Record(end, reply) => {
                let result = match end.meta.as_ref().map(|m| m.difficulty) {
                    Some(level) => board_for(&mut boards, &data_dir, level).and_then(|b| {
                        let stamp = chrono::Local::now().naive_local();
                        record_episode(&end, &data_dir, b, stamp).map_err(|e| e.to_string())
                    }),
                    None => Ok(None),
                };
                let _ = reply.send(result);
            }
            RecorderRequest::Board(level, reply) => {
                let entries = board_for(&mut boards, &data_dir, level).map(|b| b.entries().to_vec()).unwrap_or_default();
                let _ = reply.send(entries);
            }
        }
    }
}
