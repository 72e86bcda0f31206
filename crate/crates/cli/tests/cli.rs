use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_playcollect"));
    c.env_remove("PLAYCOLLECT_DATA_DIR").env_remove("PLAYCOLLECT_CONFIG");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn golden_episode() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/episode")
}

fn golden_report() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.json")
}

fn copy_episode(src: &Path, dst: &Path) {
    fs::create_dir_all(dst.join("cameras")).unwrap();
    for f in ["metadata.json", "data.json"] {
        fs::copy(src.join(f), dst.join(f)).unwrap();
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// data.json contents keyed by seed, so directory timestamps do not matter.
fn episodes_by_seed(dir: &Path) -> Vec<(u64, String)> {
    let mut out: Vec<(u64, String)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .map(|p| (json(&p.join("metadata.json"))["seed"].as_u64().unwrap(), fs::read_to_string(p.join("data.json")).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn gen_is_deterministic_and_tags_hard_scenes() {
    let t = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = run(&["gen", "--seed", "17", "--difficulty", "hard", "--out", name], t.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(t.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(t.path().join("b.json")).unwrap());
    let scene: Value = serde_json::from_slice(&a).unwrap();
    let trash: Vec<&Value> =
        scene["objects"].as_array().unwrap().iter().filter(|o| o["category"] == "trash").collect();
    assert!(!trash.is_empty());
    assert!(trash.iter().all(|o| o["pose"] == "lying"), "{trash:?}");
}

#[test]
fn gen_reports_template_problems() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--template-dir", "missing", "--out", "s.json"], t.path());
    assert_eq!(code(&o), 2);
    assert!(!t.path().join("s.json").exists());

    fs::create_dir(t.path().join("bad")).unwrap();
    fs::write(t.path().join("bad/room.json"), "{\"id\": 3}").unwrap();
    let o = run(&["gen", "--template-dir", "bad", "--out", "s.json"], t.path());
    assert_ne!(code(&o), 0);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    assert_eq!(code(&run(&["gen", "--difficulty", "medium"], t.path())), 2);
    assert_eq!(code(&run(&["frobnicate"], t.path())), 2);
}

#[test]
fn run_is_deterministic_and_writes_only_successes() {
    let t = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["run", "--episodes", "4", "--seed", "30", "--out", out, "--noise", "0.05", "--abort-episodes", "2"];
    let o = run(&args("a"), t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&run(&args("b"), t.path())), 0);
    let a = episodes_by_seed(&t.path().join("a"));
    assert_eq!(a, episodes_by_seed(&t.path().join("b")));
    let seeds: Vec<u64> = a.iter().map(|(s, _)| *s).collect();
    assert_eq!(seeds, vec![30, 31, 33]);

    // The printed mean matches the analysis duration statistics.
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mean: f64 = stdout.lines().last().unwrap().split("mean T_i ").nth(1).unwrap().trim_end_matches(" s").parse().unwrap();
    assert!(stdout.contains("successes 3/4"), "{stdout}");
    assert_eq!(code(&run(&["analyze", "--data", "a", "--out", "r.json"], t.path())), 0);
    let r = json(&t.path().join("r.json"));
    assert!((r["durations"]["mean"].as_f64().unwrap() - mean).abs() < 5e-4);
    assert_eq!(r["episodes"], 3);
}

#[test]
fn run_with_no_successes_exits_one() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["run", "--episodes", "2", "--out", "d", "--abort-episodes", "0,1", "--abort-at", "1"], t.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no episode succeeded"));
    assert!(episodes_by_seed(&t.path().join("d")).is_empty());
    assert_eq!(code(&run(&["run", "--episodes", "0"], t.path())), 2);
    assert_eq!(code(&run(&["run", "--dt", "-1"], t.path())), 2);
}

#[test]
fn analyze_matches_the_golden_report() {
    let t = tempfile::tempdir().unwrap();
    copy_episode(&golden_episode(), &t.path().join("data/episode_20260314_092653"));
    let o = run(&["analyze", "--data", "data", "--out", "report.json", "--heatmap-csv", "heat.csv"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let produced = fs::read_to_string(t.path().join("report.json")).unwrap();
    if std::env::var_os("PLAYCOLLECT_BLESS").is_some() {
        fs::create_dir_all(golden_report().parent().unwrap()).unwrap();
        fs::write(golden_report(), &produced).unwrap();
    }
    assert_eq!(produced, fs::read_to_string(golden_report()).unwrap(), "report drifted from the golden file");
    let r: Value = serde_json::from_str(&produced).unwrap();
    assert!(r["subspaces"].as_array().unwrap().iter().all(|s| s["bins"] == 20 && s["range_mode"] == "declared"));
    assert_eq!(fs::read_to_string(t.path().join("heat.csv")).unwrap().lines().count(), 8);
}

#[test]
fn analyze_rejects_empty_data() {
    let t = tempfile::tempdir().unwrap();
    fs::create_dir(t.path().join("empty")).unwrap();
    assert_eq!(code(&run(&["analyze", "--data", "empty"], t.path())), 1);
    assert_eq!(code(&run(&["analyze", "--data", "nowhere"], t.path())), 1);
    assert_eq!(code(&run(&["analyze", "--data", "empty", "--range", "sideways"], t.path())), 2);
}

#[test]
fn compare_reports_constructed_offsets() {
    let t = tempfile::tempdir().unwrap();
    copy_episode(&golden_episode(), &t.path().join("a/episode_1"));
    copy_episode(&golden_episode(), &t.path().join("b/episode_1"));
    // Group b is group a with its completion time shifted by 1.5 s.
    let meta = t.path().join("b/episode_1/metadata.json");
    let mut m = json(&meta);
    let shifted = m["completion_time"].as_f64().unwrap() + 1.5;
    m["completion_time"] = shifted.into();
    fs::write(&meta, serde_json::to_string_pretty(&m).unwrap()).unwrap();

    assert_eq!(code(&run(&["compare", "--a", "a", "--b", "a", "--out", "same.json"], t.path())), 0);
    let same = json(&t.path().join("same.json"));
    assert_eq!(same["deltas"]["duration_mean"], 0.0);
    assert!(same["deltas"]["coverage"].as_array().unwrap().iter().all(|d| d[1] == 0.0));

    assert_eq!(code(&run(&["compare", "--a", "a", "--b", "b", "--out", "cmp.json"], t.path())), 0);
    let c = json(&t.path().join("cmp.json"));
    assert!((c["deltas"]["duration_mean"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!(c["deltas"]["coverage"].as_array().unwrap().iter().all(|d| d[1] == 0.0));
}

#[test]
fn data_dir_precedence_is_flag_env_config_default() {
    let t = tempfile::tempdir().unwrap();
    copy_episode(&golden_episode(), &t.path().join("from_config/episode_1"));
    copy_episode(&golden_episode(), &t.path().join("from_env/episode_1"));
    copy_episode(&golden_episode(), &t.path().join("from_flag/episode_1"));
    copy_episode(&golden_episode(), &t.path().join("data/episode_1"));
    copy_episode(&golden_episode(), &t.path().join("data/episode_2"));
    fs::write(t.path().join("cfg.json"), r#"{"data_dir": "from_config", "bins": 10}"#).unwrap();
    let episodes = |extra_env: Option<&str>, args: &[&str]| {
        let mut c = bin();
        c.current_dir(t.path()).args(["analyze", "--out", "r.json"]).args(args);
        if let Some(e) = extra_env {
            c.env("PLAYCOLLECT_DATA_DIR", e);
        }
        let o = c.output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let r = json(&t.path().join("r.json"));
        (r["episodes"].as_u64().unwrap(), r["subspaces"][0]["bins"].as_u64().unwrap())
    };
    // The default directory holds two episodes, the others one.
    assert_eq!(episodes(None, &[]), (2, 20));
    assert_eq!(episodes(None, &["--config", "cfg.json"]), (1, 10));
    assert_eq!(episodes(Some("from_env"), &["--config", "cfg.json", "--bins", "5"]), (1, 5));
    assert_eq!(episodes(Some("from_env"), &["--config", "cfg.json", "--data", "data"]), (2, 10));
    let o = run(&["analyze", "--config", "nope.json"], t.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn help_documents_every_flag() {
    let t = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("gen", &["--template-dir", "--seed", "--difficulty", "--out"]),
        ("run", &["--episodes", "--agent", "--difficulty", "--seed", "--out", "--dt", "--noise", "--abort-episodes"]),
        ("serve", &["--port", "--templates", "--data-dir", "--grace", "--lockstep"]),
        ("analyze", &["--data", "--bins", "--range", "--active-only", "--out"]),
        ("compare", &["--a", "--b", "--out"]),
    ];
    for (cmd, flags) in cases {
        let o = run(&[cmd, "--help"], t.path());
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
