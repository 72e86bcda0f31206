//! Episode lifecycle and the persistent top-5 leaderboard.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scene::Level;

pub const DEFAULT_RESET_DELAY: f64 = 3.0;
pub const LEADERBOARD_CAPACITY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodePhase {
    Init,
    InProgress,
    Complete,
    Abort,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskEvent {
    SceneReady,
    GoalReachedAll,
    UserAbort,
    ResetElapsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("event {event:?} is not allowed in phase {phase:?}")]
pub struct IllegalTransition {
    pub phase: EpisodePhase,
    pub event: TaskEvent,
}

/// Transition table. `Reset` is transient: the scene is regenerated and a
/// further `ResetElapsed` lands in `Init`.
pub fn fsm_step(phase: EpisodePhase, event: TaskEvent) -> Result<EpisodePhase, IllegalTransition> {
    use EpisodePhase::*;
    use TaskEvent::*;
    match (phase, event) {
        (Init, SceneReady) => Ok(InProgress),
        (InProgress, GoalReachedAll) => Ok(Complete),
        (InProgress, UserAbort) => Ok(Abort),
        (Complete | Abort, ResetElapsed) => Ok(Reset),
        (Reset, ResetElapsed) => Ok(Init),
        _ => Err(IllegalTransition { phase, event }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionRule {
    #[default]
    AllDeposited,
    FirstDeposited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalProgress {
    pub episode_complete: bool,
    pub completion_time: Option<f64>,
}

/// Completion check after a frame's deposits.
pub fn on_goal_progress(newly_deposited: &[u32], remaining: usize, clock: f64, rule: CompletionRule) -> GoalProgress {
    let complete = match rule {
        CompletionRule::AllDeposited => remaining == 0 && !newly_deposited.is_empty(),
        CompletionRule::FirstDeposited => !newly_deposited.is_empty(),
    };
    GoalProgress { episode_complete: complete, completion_time: complete.then_some(clock) }
}

/// Phase tracking for one session's current episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTracker {
    pub phase: EpisodePhase,
    pub rule: CompletionRule,
    pub reset_delay: f64,
    pub completion_time: Option<f64>,
    ended_at: Option<f64>,
}

impl EpisodeTracker {
    pub fn new(rule: CompletionRule, reset_delay: f64) -> EpisodeTracker {
        EpisodeTracker { phase: EpisodePhase::Init, rule, reset_delay, completion_time: None, ended_at: None }
    }

    fn apply(&mut self, event: TaskEvent) -> Result<(), IllegalTransition> {
        self.phase = fsm_step(self.phase, event)?;
        Ok(())
    }

    pub fn scene_ready(&mut self) -> Result<(), IllegalTransition> {
        self.apply(TaskEvent::SceneReady)
    }

    /// Feeds one frame's deposits; returns the completion time when this
    /// frame completes the episode.
    pub fn on_deposits(&mut self, newly: &[u32], remaining: usize, clock: f64) -> Result<Option<f64>, IllegalTransition> {
        if self.phase != EpisodePhase::InProgress {
            return Err(IllegalTransition { phase: self.phase, event: TaskEvent::GoalReachedAll });
        }
        let p = on_goal_progress(newly, remaining, clock, self.rule);
        if p.episode_complete {
            self.apply(TaskEvent::GoalReachedAll)?;
            self.completion_time = p.completion_time;
            self.ended_at = Some(clock);
        }
        Ok(p.completion_time)
    }

    pub fn abort(&mut self, clock: f64) -> Result<(), IllegalTransition> {
        self.apply(TaskEvent::UserAbort)?;
        self.completion_time = None;
        self.ended_at = Some(clock);
        Ok(())
    }

    /// Time at which the pending reset fires, if the episode has ended.
    pub fn reset_due(&self) -> Option<f64> {
        self.ended_at.map(|t| t + self.reset_delay)
    }

    /// Moves to `Reset` once the delay has elapsed. Returns whether it did.
    pub fn poll_reset(&mut self, clock: f64) -> bool {
        match (self.phase, self.reset_due()) {
            (EpisodePhase::Complete | EpisodePhase::Abort, Some(due)) if clock >= due => {
                self.phase = EpisodePhase::Reset;
                true
            }
            _ => false,
        }
    }

    /// Starts the next episode from `Reset` (or an ended episode, skipping
    /// the delay).
    pub fn restart(&mut self) -> Result<(), IllegalTransition> {
        if matches!(self.phase, EpisodePhase::Complete | EpisodePhase::Abort) {
            self.apply(TaskEvent::ResetElapsed)?;
        }
        self.apply(TaskEvent::ResetElapsed)?;
        self.completion_time = None;
        self.ended_at = None;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub difficulty: Level,
    pub seed: u64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub player: String,
    pub time_s: f64,
    pub episode_id: String,
    pub difficulty: Level,
}

#[derive(Debug, thiserror::Error)]
pub enum LeaderboardError {
    #[error("leaderboard I/O on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed leaderboard {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("leaderboard time must be finite and non-negative, got {0}")]
    BadTime(f64),
}

/// Top-5 fastest completions, ascending by time, persisted after every
/// change. Equal times keep insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    path: Option<PathBuf>,
    entries: Vec<LeaderboardEntry>,
}

/// Board file for a difficulty inside `dir`.
pub fn leaderboard_path(dir: &Path, level: Level) -> PathBuf {
    dir.join(format!("leaderboard_{level}.json"))
}

impl Leaderboard {
    pub fn in_memory() -> Leaderboard {
        Leaderboard { path: None, entries: Vec::new() }
    }

    /// Loads a board, treating a missing file as empty.
    pub fn load(path: impl Into<PathBuf>) -> Result<Leaderboard, LeaderboardError> {
        let path = path.into();
        let entries = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Vec<LeaderboardEntry>>(&text)
                .map_err(|source| LeaderboardError::Parse { path: path.clone(), source })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(source) => return Err(LeaderboardError::Io { path, source }),
        };
        let mut board = Leaderboard { path: Some(path), entries };
        board.entries.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        board.entries.truncate(LEADERBOARD_CAPACITY);
        Ok(board)
    }

    pub fn entries(&self) -> &[LeaderboardEntry] {
        &self.entries
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Inserts an entry, returning its 1-based rank or `None` when it does
    /// not make the top five. A failed save leaves the board unchanged.
    pub fn insert(&mut self, entry: LeaderboardEntry) -> Result<Option<usize>, LeaderboardError> {
        if !(entry.time_s.is_finite() && entry.time_s >= 0.0) {
            return Err(LeaderboardError::BadTime(entry.time_s));
        }
        let pos = self.entries.partition_point(|e| e.time_s <= entry.time_s);
        if pos >= LEADERBOARD_CAPACITY {
            return Ok(None);
        }
        let mut next = self.entries.clone();
        next.insert(pos, entry);
        next.truncate(LEADERBOARD_CAPACITY);
        if let Some(path) = &self.path {
            write_atomic(path, &to_json(&next))?;
        }
        self.entries = next;
        Ok(Some(pos + 1))
    }

    pub fn to_json(&self) -> String {
        to_json(&self.entries)
    }
}

fn to_json(entries: &[LeaderboardEntry]) -> String {
    let mut s = serde_json::to_string_pretty(entries).expect("entries serialize");
    s.push('\n');
    s
}

fn write_atomic(path: &Path, text: &str) -> Result<(), LeaderboardError> {
    let io = |source| LeaderboardError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

impl fmt::Display for Leaderboard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(f, "{}. {:<16} {:>8.2} s  {}", i + 1, e.player, e.time_s, e.episode_id)?;
        }
        Ok(())
    }
}
