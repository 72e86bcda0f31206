use std::path::Path;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use playcollect_core::agent::{AgentConfig, ScriptedAgent};
use playcollect_core::episode::{frames_json, list_episodes, read_episode, DATA_FILE};
use playcollect_core::scene::Level;
use playcollect_core::session::{
    neutral_input, parse_client_message, Assets, ClientBody, ClientMessage, EndReason, ErrorCode, InputMessage,
    NoticeCode, ServerBody, ServerMessage, Session, SessionConfig,
};
use playcollect_teleop::{spawn, AppState, ClockMode, ServerConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn start(config: ServerConfig) -> (String, AppState) {
    let state = AppState::new(Assets::builtin(), config);
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = spawn(listener, state.clone()).unwrap();
    (addr.to_string(), state)
}

async fn connect(addr: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

fn hello(level: &str, seed: Option<u64>) -> String {
    ClientMessage::new(None, ClientBody::Hello { player: "tester".into(), difficulty: level.into(), seed }).to_json()
}

async fn send(ws: &mut Ws, text: String) {
    ws.send(Message::Text(text.into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server reply").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads until a message satisfies `pred`, skipping state frames.
async fn recv_until(ws: &mut Ws, pred: impl Fn(&ServerBody) -> bool) -> ServerMessage {
    loop {
        let m = recv(ws).await;
        if pred(&m.body) {
            return m;
        }
    }
}

async fn http_get(addr: &str, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let status = buf[9..12].parse().unwrap();
    let body = buf.split("\r\n\r\n").nth(1).unwrap_or("").to_string();
    (status, body)
}

fn lockstep(dir: &Path) -> ServerConfig {
    ServerConfig { clock: ClockMode::Lockstep, ..ServerConfig::new(dir) }
}

#[tokio::test]
async fn hello_errors_and_distinct_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, state) = start(lockstep(dir.path())).await;
    let mut ws = connect(&addr).await;

    send(&mut ws, "{not json".into()).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::BadMessage, .. }));
    send(&mut ws, hello("medium", None)).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::BadDifficulty, .. }));
    send(&mut ws, hello("easy", None).replace("\"protocol_version\":1", "\"protocol_version\":9")).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::BadVersion, .. }));
    let input = ClientMessage::new(None, ClientBody::Input(InputMessage::from_control_input(&neutral_input())));
    send(&mut ws, input.to_json()).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::NoSession, .. }));
    let resume = ClientMessage::new(Some("nope"), ClientBody::Resume).to_json();
    send(&mut ws, resume).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::UnknownSession, .. }));

    send(&mut ws, hello("easy", None)).await;
    let a = recv(&mut ws).await;
    let mut other = connect(&addr).await;
    send(&mut other, hello("HARD", None)).await;
    let b = recv(&mut other).await;
    let (ServerBody::Scene { scene: sa }, ServerBody::Scene { scene: sb }) = (&a.body, &b.body) else {
        panic!("expected scenes, got {a:?} / {b:?}");
    };
    assert_ne!(a.session_id, b.session_id);
    assert_ne!(sa.seed, sb.seed);
    assert_eq!((sa.difficulty.level, sb.difficulty.level), (Level::Easy, Level::Hard));
    assert_eq!(state.live_sessions(), 2);

    // A second hello on the same connection is refused.
    send(&mut ws, hello("easy", None)).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Error { code: ErrorCode::BadMessage, .. }));
}

#[tokio::test]
async fn out_of_range_input_is_clamped_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(lockstep(dir.path())).await;
    let mut ws = connect(&addr).await;
    send(&mut ws, hello("easy", Some(1))).await;
    let id = recv(&mut ws).await.session_id;
    let mut input = InputMessage::from_control_input(&neutral_input());
    input.stick = [2.0, -3.0];
    send(&mut ws, ClientMessage::new(id.as_deref(), ClientBody::Input(input)).to_json()).await;
    let m = recv_until(&mut ws, |b| matches!(b, ServerBody::Notice { .. })).await;
    assert!(matches!(m.body, ServerBody::Notice { code: NoticeCode::InputClamped, .. }));

    send(&mut ws, ClientMessage::new(id.as_deref(), ClientBody::Abort).to_json()).await;
    let m = recv_until(&mut ws, |b| matches!(b, ServerBody::EpisodeEnd { .. })).await;
    let ServerBody::EpisodeEnd { success, reason, episode_id, .. } = m.body else { unreachable!() };
    assert!(!success && episode_id.is_none());
    assert_eq!(reason, EndReason::UserAbort);
    assert!(list_episodes(dir.path()).unwrap().is_empty());
}

/// Plays one full episode through a lockstep server with the scripted agent.
/// A local session mirrors the server so the agent can observe the world.
async fn play_through_service(data: &Path, seed: u64) -> (Vec<u8>, String) {
    let (addr, _) = start(lockstep(data)).await;
    let ws = connect(&addr).await;
    let (mut sink, mut stream) = ws.split();
    sink.send(Message::Text(hello("easy", Some(seed)).into())).await.unwrap();

    let (tx, mut rx) = mpsc::unbounded_channel::<ServerMessage>();
    tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            if let Message::Text(t) = msg {
                if tx.send(serde_json::from_str(&t).unwrap()).is_err() {
                    break;
                }
            }
        }
    });
    let first = rx.recv().await.unwrap();
    let id = first.session_id.clone().unwrap();
    assert!(matches!(first.body, ServerBody::Scene { .. }));

    let mut local = Session::new("mirror", "tester", Level::Easy, seed, Assets::builtin(), SessionConfig::default()).unwrap();
    let mut agent = ScriptedAgent::new(AgentConfig::default(), seed);
    let local_end = loop {
        let input = agent.step(local.world(), local.model());
        let text = ClientMessage::new(Some(&id), ClientBody::Input(InputMessage::from_control_input(&input))).to_json();
        // The mirror sees exactly what the server parses.
        let parsed = match parse_client_message(&text).unwrap().body {
            ClientBody::Input(i) => i.to_control_input(),
            _ => unreachable!(),
        };
        local.set_input(parsed).unwrap();
        let out = local.tick().unwrap();
        sink.send(Message::Text(text.into())).await.unwrap();
        if let Some(end) = out.episode_end {
            break end;
        }
        assert!(local.total_ticks() < 10_000, "episode did not finish");
    };
    assert!(local_end.success);

    let episode_id = loop {
        let m = tokio::time::timeout(Duration::from_secs(30), rx.recv()).await.unwrap().unwrap();
        if let ServerBody::EpisodeEnd { success, completion_time, episode_id, rank, .. } = m.body {
            assert!(success);
            assert_eq!(completion_time.unwrap().to_bits(), local_end.completion_time.unwrap().to_bits());
            assert_eq!(rank, Some(1));
            break episode_id.unwrap();
        }
    };
    let board = loop {
        if let ServerBody::Leaderboard { entries, .. } = rx.recv().await.unwrap().body {
            break entries;
        }
    };
    assert_eq!(board.len(), 1);
    let ep = data.join(&episode_id);
    let (_, frames) = read_episode(&ep).unwrap();
    assert_eq!(frames_json(&frames), frames_json(&local_end.frames));
    (std::fs::read(ep.join(DATA_FILE)).unwrap(), episode_id)
}

#[tokio::test]
async fn lockstep_replays_through_the_service_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, _) = play_through_service(a.path(), 11).await;
    let (db, _) = play_through_service(b.path(), 11).await;
    assert!(da == db, "data.json differs between identical runs");
}

#[tokio::test]
async fn disconnect_discards_the_episode_after_the_grace_period() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig { disconnect_grace: Duration::from_millis(300), ..ServerConfig::new(dir.path()) };
    let (addr, state) = start(config).await;
    let mut ws = connect(&addr).await;
    send(&mut ws, hello("easy", Some(5))).await;
    let id = recv(&mut ws).await.session_id;
    let mut input = InputMessage::from_control_input(&neutral_input());
    input.stick = [0.0, 1.0];
    send(&mut ws, ClientMessage::new(id.as_deref(), ClientBody::Input(input)).to_json()).await;
    recv_until(&mut ws, |b| matches!(b, ServerBody::State { snapshot } if snapshot.tick > 10)).await;
    assert_eq!(http_get(&addr, "/health").await.1, r#"{"sessions":1,"status":"ok"}"#);
    drop(ws);

    tokio::time::sleep(Duration::from_millis(900)).await;
    assert_eq!(state.live_sessions(), 0);
    assert_eq!(http_get(&addr, "/health").await.1, r#"{"sessions":0,"status":"ok"}"#);
    assert!(list_episodes(dir.path()).unwrap().is_empty());
    let (status, body) = http_get(&addr, "/leaderboard?difficulty=easy").await;
    assert_eq!(status, 200);
    assert_eq!(body, r#"{"difficulty":"easy","entries":[]}"#);
    assert_eq!(http_get(&addr, "/leaderboard?difficulty=nightmare").await.0, 400);
}

#[tokio::test]
async fn resume_within_grace_reattaches() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, state) = start(lockstep(dir.path())).await;
    let mut ws = connect(&addr).await;
    send(&mut ws, hello("hard", Some(21))).await;
    let first = recv(&mut ws).await;
    let id = first.session_id.clone().unwrap();
    let input = ClientMessage::new(Some(&id), ClientBody::Input(InputMessage::from_control_input(&neutral_input())));
    for _ in 0..4 {
        send(&mut ws, input.to_json()).await;
    }
    let before = recv_until(&mut ws, |b| matches!(b, ServerBody::State { snapshot } if snapshot.tick == 4)).await;
    drop(ws);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(state.live_sessions(), 1);

    let mut ws = connect(&addr).await;
    send(&mut ws, ClientMessage::new(Some(&id), ClientBody::Resume).to_json()).await;
    assert!(matches!(recv(&mut ws).await.body, ServerBody::Notice { code: NoticeCode::Resumed, .. }));
    let scene = recv(&mut ws).await;
    assert_eq!(scene.body, first.body);
    for _ in 0..2 {
        send(&mut ws, input.to_json()).await;
    }
    let m = recv_until(&mut ws, |b| matches!(b, ServerBody::State { .. })).await;
    let (ServerBody::State { snapshot: a }, ServerBody::State { snapshot: b }) = (&before.body, &m.body) else {
        unreachable!()
    };
    assert_eq!(b.tick, a.tick + 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn eight_realtime_sessions_keep_their_tick_rate() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(ServerConfig::new(dir.path())).await;
    let window = Duration::from_secs(2);
    let mut tasks = Vec::new();
    for k in 0..8u64 {
        let addr = addr.clone();
        tasks.push(tokio::spawn(async move {
            let mut ws = connect(&addr).await;
            send(&mut ws, hello(if k % 2 == 0 { "easy" } else { "hard" }, Some(100 + k))).await;
            let id = recv(&mut ws).await.session_id;
            let mut input = InputMessage::from_control_input(&neutral_input());
            input.stick = [0.3, 0.6];
            send(&mut ws, ClientMessage::new(id.as_deref(), ClientBody::Input(input)).to_json()).await;
            let first = recv_until(&mut ws, |b| matches!(b, ServerBody::State { .. })).await;
            let start = tokio::time::Instant::now();
            let mut last = first.clone();
            while start.elapsed() < window {
                last = recv_until(&mut ws, |b| matches!(b, ServerBody::State { .. })).await;
            }
            let elapsed = start.elapsed().as_secs_f64();
            let tick = |m: &ServerMessage| match &m.body {
                ServerBody::State { snapshot } => snapshot.tick,
                _ => unreachable!(),
            };
            (tick(&last) - tick(&first)) as f64 / (elapsed / 0.02)
        }));
    }
    for t in tasks {
        let ratio = t.await.unwrap();
        assert!(ratio >= 0.95, "tick rate ratio {ratio}");
    }
}
