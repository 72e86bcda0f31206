use std::collections::BTreeSet;

use chrono::NaiveDate;
use playcollect_core::agent::{run_scripted_episode, AgentConfig, EpisodeRunOptions, ScriptedAgent};
use playcollect_core::episode::{frames_json, list_episodes, metadata_json, read_metadata};
use playcollect_core::rng::RngStream;
use playcollect_core::scene::Level;
use playcollect_core::session::{record_episode, replay, Assets, EpisodeEnd, Session, SessionConfig};
use playcollect_core::task::{leaderboard_path, Leaderboard};

fn play(level: Level, seed: u64, noise: f64) -> EpisodeEnd {
    let assets = Assets::builtin();
    let mut s = Session::new("s", "p", level, seed, assets, SessionConfig::default()).unwrap();
    let mut agent = ScriptedAgent::new(AgentConfig { noise_sigma: noise, ..AgentConfig::default() }, seed);
    for _ in 0..6_000 {
        let input = agent.step(s.world(), s.model());
        s.set_input(input).unwrap();
        if let Some(end) = s.tick().unwrap().episode_end {
            return end;
        }
    }
    panic!("episode did not finish");
}

#[test]
fn replaying_a_timeline_reproduces_the_log_bit_exactly() {
    for (level, seed, noise) in [(Level::Easy, 3, 0.05), (Level::Hard, 8, 0.0)] {
        let end = play(level, seed, noise);
        assert!(end.success);
        let again = replay(Assets::builtin(), SessionConfig::default(), "p", level, seed, &end.timeline, 10_000)
            .unwrap()
            .expect("replay finishes");
        assert_eq!(frames_json(&again.frames), frames_json(&end.frames));
        assert_eq!(metadata_json(again.meta.as_ref().unwrap()), metadata_json(end.meta.as_ref().unwrap()));
        assert_eq!(again.completion_time.unwrap().to_bits(), end.completion_time.unwrap().to_bits());
    }
}

#[test]
fn timeline_holds_one_entry_per_input_change() {
    let end = play(Level::Easy, 2, 0.0);
    assert!(end.timeline.windows(2).all(|w| w[0].tick < w[1].tick && w[0].input != w[1].input));
    assert_eq!(end.timeline[0].tick, 0);
    assert_eq!(end.frames.len() as u64, end.end_tick);
}

#[test]
fn only_completed_episodes_reach_disk_and_the_board() {
    let data = tempfile::tempdir().unwrap();
    let board_path = leaderboard_path(data.path(), Level::Easy);
    let mut board = Leaderboard::load(&board_path).unwrap();
    let mut rng = RngStream::new(77, "test/gating");
    let mut completed = BTreeSet::new();
    let base = NaiveDate::from_ymd_opt(2026, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for k in 0..12u64 {
        let abort_at = rng.bernoulli(0.4).then(|| rng.uniform(0.5, 30.0));
        let run = run_scripted_episode(
            Assets::builtin(),
            SessionConfig::default(),
            AgentConfig::default(),
            &format!("player{k}"),
            Level::Easy,
            100 + k,
            EpisodeRunOptions { time_limit: 120.0, abort_at },
        )
        .unwrap();
        match (run.end.success, abort_at) {
            (true, Some(a)) => assert!(run.end.completion_time.unwrap() <= a),
            (false, a) => assert!(a.is_some(), "episode {k}: {:?}", run.failure),
            (true, None) => {}
        }
        let stamp = base + chrono::Duration::seconds(k as i64 / 2);
        match record_episode(&run.end, data.path(), &mut board, stamp).unwrap() {
            Some(r) => {
                assert!(run.end.success);
                completed.insert(r.episode_id);
            }
            None => assert!(!run.end.success && run.end.frames.is_empty()),
        }
        let times: Vec<f64> = board.entries().iter().map(|e| e.time_s).collect();
        assert!(times.len() <= 5 && times.windows(2).all(|w| w[0] <= w[1]));
    }
    let on_disk: BTreeSet<String> = list_episodes(data.path())
        .unwrap()
        .iter()
        .map(|d| read_metadata(d).unwrap().episode_id)
        .collect();
    assert_eq!(on_disk, completed);
    assert!(!completed.is_empty());
    let reloaded = Leaderboard::load(&board_path).unwrap();
    assert_eq!(reloaded.entries(), board.entries());
}
