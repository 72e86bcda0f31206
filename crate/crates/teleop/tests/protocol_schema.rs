use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use playcollect_core::scene::Level;
use playcollect_core::session::{
    neutral_input, Assets, ClientBody, ClientMessage, EndReason, InputMessage, ServerBody, ServerMessage,
};
use playcollect_core::task::LeaderboardEntry;
use playcollect_teleop::{spawn, AppState, ClockMode, ServerConfig};
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;

fn schema(dir: &str, name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/protocol").join(dir).join(format!("{name}.schema.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn check(dir: &str, text: &str) -> String {
    let v: Value = serde_json::from_str(text).unwrap();
    let name = v["type"].as_str().unwrap().to_string();
    let errors: Vec<String> = schema(dir, &name).iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{text}");
    name
}

#[test]
fn client_messages_match_their_schemas() {
    let mut input = InputMessage::from_control_input(&neutral_input());
    input.trigger_r = 0.7;
    let bodies = [
        ClientBody::Hello { player: "p".into(), difficulty: "easy".into(), seed: Some(3) },
        ClientBody::Hello { player: "p".into(), difficulty: "hard".into(), seed: None },
        ClientBody::Resume,
        ClientBody::Input(input.clone()),
        ClientBody::Abort,
        ClientBody::ResetRequest,
    ];
    for b in bodies {
        check("client", &ClientMessage::new(Some("s1"), b).to_json());
    }
    // The schema rejects what the server would reject.
    let mut v: Value = serde_json::from_str(&ClientMessage::new(None, ClientBody::Input(input)).to_json()).unwrap();
    v.as_object_mut().unwrap().remove("trigger_l");
    assert!(!schema("client", "input").is_valid(&v));
}

#[test]
fn constructed_server_messages_match_their_schemas() {
    let bodies = [
        ServerBody::EpisodeEnd {
            success: true,
            reason: EndReason::Completed,
            completion_time: Some(41.5),
            rank: Some(2),
            episode_id: Some("episode_20260101_000000".into()),
        },
        ServerBody::Leaderboard {
            difficulty: Level::Hard,
            entries: vec![LeaderboardEntry { player: "p".into(), time_s: 41.5, episode_id: "e".into(), difficulty: Level::Hard }],
        },
    ];
    for b in bodies {
        check("server", &ServerMessage::new(Some("s1"), b).to_json());
    }
}

#[tokio::test]
async fn live_server_traffic_matches_the_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(Assets::builtin(), ServerConfig { clock: ClockMode::Lockstep, ..ServerConfig::new(dir.path()) });
    let addr = spawn(tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap(), state).unwrap();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let send = |v: String| Message::Text(v.into());

    ws.send(send("[]".into())).await.unwrap();
    ws.send(send(ClientMessage::new(None, ClientBody::Hello { player: "p".into(), difficulty: "easy".into(), seed: Some(2) }).to_json()))
        .await
        .unwrap();
    let mut input = InputMessage::from_control_input(&neutral_input());
    input.stick = [0.0, 4.0];
    let mut seen = std::collections::BTreeSet::new();
    let mut id = None;
    while !seen.contains("scene") {
        let Some(Ok(Message::Text(t))) = ws.next().await else { panic!("closed") };
        seen.insert(check("server", &t));
        id = id.or_else(|| serde_json::from_str::<Value>(&t).unwrap()["session_id"].as_str().map(str::to_string));
    }
    for _ in 0..4 {
        ws.send(send(ClientMessage::new(id.as_deref(), ClientBody::Input(input.clone())).to_json())).await.unwrap();
    }
    ws.send(send(ClientMessage::new(id.as_deref(), ClientBody::Abort).to_json())).await.unwrap();
    ws.send(send(ClientMessage::new(id.as_deref(), ClientBody::ResetRequest).to_json())).await.unwrap();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while seen.len() < 5 && tokio::time::Instant::now() < deadline {
        let Ok(Some(Ok(Message::Text(t)))) = tokio::time::timeout(Duration::from_secs(5), ws.next()).await else { break };
        seen.insert(check("server", &t));
    }
    let expected: std::collections::BTreeSet<String> =
        ["error", "scene", "notice", "state", "episode_end"].iter().map(|s| s.to_string()).collect();
    assert_eq!(seen, expected);
}
