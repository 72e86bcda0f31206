//! One operator session: scene, world, controller and episode state driven
//! at a fixed tick, plus the JSON wire protocol spoken by remote clients.
//!
//! Inputs are sticky and last-writer-wins: whatever input is pending when a
//! tick starts is the one that tick uses, and it stays in force until a
//! newer one arrives. Every input change is recorded against the episode
//! tick it took effect on, so an episode can be replayed exactly.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDateTime;

use serde::{Deserialize, Serialize};

use crate::episode::{capture_frame, write_episode, EpisodeError, EpisodeMetadata, FrameData, ObjectRecord};
use crate::math::{Pose, Quat, Vec3};
use crate::robot::control::{ControlConfig, ControlError, ControlInput, HandInput, RobotController};
use crate::robot::{BaseState, RobotModel};
use crate::scene::{generate, Catalog, DifficultyConfig, Level, RoomTemplate, SceneError, SceneInstance};
use crate::sim::{check_goal, step, SimConfig, StepCommand, WorldState};
use crate::task::{
    CompletionRule, EpisodePhase, EpisodeTracker, Leaderboard, LeaderboardEntry, LeaderboardError, DEFAULT_RESET_DELAY,
};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_BROADCAST_EVERY: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub sim: SimConfig,
    pub control: ControlConfig,
    pub completion: CompletionRule,
    pub reset_delay: f64,
    /// A state snapshot is produced every this many ticks.
    pub broadcast_every: u32,
    /// Episodes still running at this episode time are aborted.
    pub max_episode_time: Option<f64>,
    /// Trash count range override.
    pub trash_count_range: Option<[u32; 2]>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            sim: SimConfig::default(),
            control: ControlConfig::default(),
            completion: CompletionRule::AllDeposited,
            reset_delay: DEFAULT_RESET_DELAY,
            broadcast_every: DEFAULT_BROADCAST_EVERY,
            max_episode_time: None,
            trash_count_range: None,
        }
    }
}

/// Shared, read-only inputs for building scenes and robots.
#[derive(Debug, Clone)]
pub struct Assets {
    pub templates: Arc<Vec<RoomTemplate>>,
    pub catalog: Arc<Catalog>,
    pub model: Arc<RobotModel>,
}

impl Assets {
    pub fn builtin() -> Assets {
        Assets {
            templates: Arc::new(crate::scene::builtin_templates()),
            catalog: Arc::new(Catalog::builtin()),
            model: Arc::new(RobotModel::builtin()),
        }
    }
}

/// An input and the episode tick it first applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedInput {
    pub tick: u64,
    pub input: ControlInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    UserAbort,
    Disconnected,
    TimeLimit,
}

/// A finished episode. Frames and metadata are only meaningful for
/// successful episodes; aborted ones carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeEnd {
    pub success: bool,
    pub reason: EndReason,
    pub completion_time: Option<f64>,
    pub seed: u64,
    pub end_tick: u64,
    pub frames: Vec<FrameData>,
    pub meta: Option<EpisodeMetadata>,
    pub timeline: Vec<TimedInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub elapsed: f64,
    pub phase: EpisodePhase,
    pub base: BaseState,
    pub joints: Vec<f64>,
    pub hand_joints: Vec<f64>,
    pub objects: Vec<ObjectRecord>,
    pub held: [Option<u32>; 2],
    pub trash_remaining: usize,
}

#[derive(Debug, Default)]
pub struct TickOutput {
    pub snapshot: Option<StateSnapshot>,
    pub episode_end: Option<EpisodeEnd>,
    /// A new scene was generated by a reset this tick.
    pub new_scene: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputAck {
    Accepted,
    /// Accepted after clamping out-of-range axes or triggers.
    Clamped,
    /// The episode has ended; the input was dropped.
    Ignored,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    player: String,
    level: Level,
    base_seed: u64,
    episode_index: u64,
    seed: u64,
    assets: Assets,
    config: SessionConfig,
    scene: SceneInstance,
    world: WorldState,
    controller: RobotController,
    tracker: EpisodeTracker,
    frames: Vec<FrameData>,
    current: ControlInput,
    pending: Option<ControlInput>,
    timeline: Vec<TimedInput>,
    clock_ticks: u64,
    total_ticks: u64,
}

/// Scene seed for the `k`-th episode of a session.
pub fn episode_seed(base: u64, k: u64) -> u64 {
    base.wrapping_add(k)
}

/// Neutral operator input: controllers at the origin, facing forward.
pub fn neutral_input() -> ControlInput {
    ControlInput::default()
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        player: impl Into<String>,
        level: Level,
        seed: u64,
        assets: Assets,
        config: SessionConfig,
    ) -> Result<Session, SessionError> {
        let scene = build_scene(&assets, level, seed, &config)?;
        let world = WorldState::new(&scene, &assets.model, config.sim.dt);
        let controller = RobotController::new((*assets.model).clone(), config.control.clone());
        let tracker = EpisodeTracker::new(config.completion, config.reset_delay);
        Ok(Session {
            id: id.into(),
            player: player.into(),
            level,
            base_seed: seed,
            episode_index: 0,
            seed,
            assets,
            config,
            scene,
            world,
            controller,
            tracker,
            frames: Vec::new(),
            current: neutral_input(),
            pending: None,
            timeline: Vec::new(),
            clock_ticks: 0,
            total_ticks: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn player(&self) -> &str {
        &self.player
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn scene(&self) -> &SceneInstance {
        &self.scene
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn model(&self) -> &RobotModel {
        &self.assets.model
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> EpisodePhase {
        self.tracker.phase
    }

    pub fn dt(&self) -> f64 {
        self.config.sim.dt
    }

    /// Ticks since the session started, across episodes.
    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    /// Queues an input for the next tick, replacing any pending one.
    pub fn set_input(&mut self, input: ControlInput) -> Result<InputAck, ControlError> {
        if !input.is_finite() {
            return Err(ControlError::NonFiniteInput);
        }
        if matches!(self.tracker.phase, EpisodePhase::Complete | EpisodePhase::Abort | EpisodePhase::Reset) {
            return Ok(InputAck::Ignored);
        }
        let clamped = input.clamped();
        let ack = if clamped != input { InputAck::Clamped } else { InputAck::Accepted };
        self.pending = Some(clamped);
        Ok(ack)
    }

    /// Aborts a running episode; its frames are discarded.
    pub fn abort(&mut self, reason: EndReason) -> Option<EpisodeEnd> {
        if self.tracker.phase != EpisodePhase::InProgress {
            return None;
        }
        self.tracker.abort(self.clock()).expect("InProgress accepts an abort");
        self.frames.clear();
        Some(EpisodeEnd {
            success: false,
            reason,
            completion_time: None,
            seed: self.seed,
            end_tick: self.clock_ticks,
            frames: Vec::new(),
            meta: None,
            timeline: std::mem::take(&mut self.timeline),
        })
    }

    /// Starts the next episode now, aborting a running one first.
    pub fn reset_now(&mut self) -> Result<Option<EpisodeEnd>, SessionError> {
        let ended = self.abort(EndReason::UserAbort);
        if self.tracker.phase == EpisodePhase::Init {
            return Ok(ended);
        }
        self.next_episode()?;
        Ok(ended)
    }

    fn clock(&self) -> f64 {
        self.clock_ticks as f64 * self.config.sim.dt
    }

    fn next_episode(&mut self) -> Result<(), SessionError> {
        self.episode_index += 1;
        self.seed = episode_seed(self.base_seed, self.episode_index);
        self.scene = build_scene(&self.assets, self.level, self.seed, &self.config)?;
        self.world = WorldState::new(&self.scene, &self.assets.model, self.config.sim.dt);
        self.controller = RobotController::new((*self.assets.model).clone(), self.config.control.clone());
        self.tracker.restart().expect("ended episodes can restart");
        self.frames.clear();
        self.timeline.clear();
        self.current = neutral_input();
        self.pending = None;
        self.clock_ticks = 0;
        Ok(())
    }

    /// Advances the session by one tick.
    pub fn tick(&mut self) -> Result<TickOutput, SessionError> {
        let mut out = TickOutput::default();
        self.total_ticks += 1;
        match self.tracker.phase {
            EpisodePhase::Init => {
                if self.pending.is_some() {
                    self.tracker.scene_ready().expect("Init accepts scene_ready");
                    out.episode_end = self.run_frame()?;
                }
            }
            EpisodePhase::InProgress => out.episode_end = self.run_frame()?,
            EpisodePhase::Complete | EpisodePhase::Abort => {
                self.clock_ticks += 1;
                if self.tracker.poll_reset(self.clock()) {
                    self.next_episode()?;
                    out.new_scene = true;
                }
            }
            EpisodePhase::Reset => {
                self.next_episode()?;
                out.new_scene = true;
            }
        }
        let every = u64::from(self.config.broadcast_every.max(1));
        if self.total_ticks % every == 0 {
            out.snapshot = Some(self.snapshot());
        }
        Ok(out)
    }

    fn run_frame(&mut self) -> Result<Option<EpisodeEnd>, SessionError> {
        if let Some(input) = self.pending.take() {
            if input != self.current || self.timeline.is_empty() {
                self.timeline.push(TimedInput { tick: self.clock_ticks, input });
            }
            self.current = input;
        }
        let model = &self.assets.model;
        let dt = self.config.sim.dt;
        let cmd = self.controller.tick(&self.current, dt)?;
        self.frames.push(capture_frame(&self.world, &cmd));
        let step_cmd = StepCommand { chassis: cmd.chassis, joint_targets: cmd.smoothed, triggers: cmd.triggers, bob: cmd.bob };
        step(&mut self.world, model, &step_cmd, &self.config.sim);
        self.clock_ticks += 1;
        let newly = check_goal(&mut self.world, &self.config.sim);
        let remaining = self.world.trash_remaining();
        let clock = self.world.time();
        if let Some(t) = self.tracker.on_deposits(&newly, remaining, clock).expect("InProgress accepts deposits") {
            let mut meta = EpisodeMetadata::new(
                model,
                &self.player,
                self.level,
                self.seed,
                &self.scene.template_id,
                self.scene.trash_count(),
                dt,
                Some(t),
            );
            meta.total_frames = self.frames.len();
            return Ok(Some(EpisodeEnd {
                success: true,
                reason: EndReason::Completed,
                completion_time: Some(t),
                seed: self.seed,
                end_tick: self.clock_ticks,
                frames: std::mem::take(&mut self.frames),
                meta: Some(meta),
                timeline: std::mem::take(&mut self.timeline),
            }));
        }
        if self.config.max_episode_time.is_some_and(|limit| clock >= limit) {
            return Ok(self.abort(EndReason::TimeLimit));
        }
        Ok(None)
    }

    /// Read-only view of the current state; never mutates the simulation.
    pub fn snapshot(&self) -> StateSnapshot {
        let w = &self.world;
        StateSnapshot {
            tick: w.tick,
            elapsed: w.time(),
            phase: self.tracker.phase,
            base: w.base,
            joints: w.q.to_vec(),
            hand_joints: w.hand_q.iter().flatten().copied().collect(),
            objects: w
                .objects
                .iter()
                .map(|o| ObjectRecord { id: o.id, position: o.position, orientation: o.orientation, attached: o.attached.is_some() })
                .collect(),
            held: w.held,
            trash_remaining: w.trash_remaining(),
        }
    }
}

fn build_scene(assets: &Assets, level: Level, seed: u64, config: &SessionConfig) -> Result<SceneInstance, SceneError> {
    let mut d = DifficultyConfig::for_level(level);
    if let Some([lo, hi]) = config.trash_count_range {
        d = d.with_trash_range(lo, hi);
    }
    generate(&assets.templates, &assets.catalog, &d, seed)
}

/// Re-runs an episode from its seed and recorded input timeline. Returns
/// the episode end, or `None` if the replay did not end within `max_ticks`.
pub fn replay(
    assets: Assets,
    config: SessionConfig,
    player: &str,
    level: Level,
    seed: u64,
    timeline: &[TimedInput],
    max_ticks: u64,
) -> Result<Option<EpisodeEnd>, SessionError> {
    let mut s = Session::new("replay", player, level, seed, assets, config)?;
    let mut next = 0;
    for _ in 0..max_ticks {
        let t = s.clock_ticks;
        while next < timeline.len() && timeline[next].tick <= t {
            s.set_input(timeline[next].input)?;
            next += 1;
        }
        if let Some(end) = s.tick()?.episode_end {
            return Ok(Some(end));
        }
    }
    Ok(None)
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Leaderboard(#[from] LeaderboardError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recorded {
    pub dir: PathBuf,
    pub episode_id: String,
    pub rank: Option<usize>,
}

/// Writes a successful episode under `data_dir` and offers it to `board`.
/// Anything else leaves no trace and returns `None`.
pub fn record_episode(
    end: &EpisodeEnd,
    data_dir: &Path,
    board: &mut Leaderboard,
    stamp: NaiveDateTime,
) -> Result<Option<Recorded>, RecordError> {
    let (Some(meta), Some(t), true) = (&end.meta, end.completion_time, end.success) else {
        return Ok(None);
    };
    let dir = write_episode(&end.frames, meta, data_dir, stamp)?;
    let episode_id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let rank = board.insert(LeaderboardEntry {
        player: meta.player.clone(),
        time_s: t,
        episode_id: episode_id.clone(),
        difficulty: meta.difficulty,
    })?;
    Ok(Some(Recorded { dir, episode_id, rank }))
}

// ---- wire protocol -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WirePose {
    pub position: [f64; 3],
    /// `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

impl WirePose {
    pub fn identity() -> WirePose {
        WirePose { position: [0.0; 3], orientation: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn to_pose(&self) -> Pose {
        let [w, x, y, z] = self.orientation;
        let q = if w == 0.0 && x == 0.0 && y == 0.0 && z == 0.0 { Quat::IDENTITY } else { Quat::new(w, x, y, z) };
        Pose::new(Vec3::from_array(self.position), q)
    }

    pub fn from_pose(p: &Pose) -> WirePose {
        WirePose { position: p.position.to_array(), orientation: p.orientation.to_array() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMessage {
    pub stick: [f64; 2],
    pub clutch_l: bool,
    pub clutch_r: bool,
    pub controller_pose_l: WirePose,
    pub controller_pose_r: WirePose,
    pub trigger_l: f64,
    pub trigger_r: f64,
    /// Operator camera pose; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_pose: Option<WirePose>,
}

impl InputMessage {
    pub fn to_control_input(&self) -> ControlInput {
        let hand = |clutch, pose: &WirePose, trigger| {
            let p = pose.to_pose();
            HandInput { clutch, position: p.position, orientation: p.orientation, trigger }
        };
        ControlInput {
            stick: self.stick,
            hands: [hand(self.clutch_l, &self.controller_pose_l, self.trigger_l), hand(self.clutch_r, &self.controller_pose_r, self.trigger_r)],
            camera: self.camera_pose.map_or(Pose::IDENTITY, |c| c.to_pose()),
        }
    }

    pub fn from_control_input(c: &ControlInput) -> InputMessage {
        let pose = |h: &HandInput| WirePose { position: h.position.to_array(), orientation: h.orientation.to_array() };
        InputMessage {
            stick: c.stick,
            clutch_l: c.hands[0].clutch,
            clutch_r: c.hands[1].clutch,
            controller_pose_l: pose(&c.hands[0]),
            controller_pose_r: pose(&c.hands[1]),
            trigger_l: c.hands[0].trigger,
            trigger_r: c.hands[1].trigger,
            camera_pose: Some(WirePose::from_pose(&c.camera)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Hello {
        player: String,
        difficulty: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Reattach to a paused session named by the envelope's session id.
    Resume,
    Input(InputMessage),
    Abort,
    ResetRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadDifficulty,
    BadMessage,
    BadVersion,
    BadInput,
    NoSession,
    UnknownSession,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoticeCode {
    InputClamped,
    InputIgnored,
    Paused,
    Resumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    Scene { scene: Box<SceneInstance> },
    State { snapshot: Box<StateSnapshot> },
    EpisodeEnd {
        success: bool,
        reason: EndReason,
        #[serde(rename = "T_i")]
        completion_time: Option<f64>,
        rank: Option<usize>,
        episode_id: Option<String>,
    },
    Leaderboard { difficulty: Level, entries: Vec<LeaderboardEntry> },
    Error { code: ErrorCode, message: String },
    Notice { code: NoticeCode, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<B> {
    pub protocol_version: u32,
    pub session_id: Option<String>,
    #[serde(flatten)]
    pub body: B,
}

pub type ClientMessage = Envelope<ClientBody>;
pub type ServerMessage = Envelope<ServerBody>;

impl<B: Serialize> Envelope<B> {
    pub fn new(session_id: Option<&str>, body: B) -> Envelope<B> {
        Envelope { protocol_version: PROTOCOL_VERSION, session_id: session_id.map(str::to_string), body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

/// Parses a client message and checks its protocol version.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, (ErrorCode, String)> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| (ErrorCode::BadMessage, e.to_string()))?;
    if msg.protocol_version != PROTOCOL_VERSION {
        return Err((
            ErrorCode::BadVersion,
            format!("protocol version {} is not supported (server speaks {PROTOCOL_VERSION})", msg.protocol_version),
        ));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::Hand;

    fn session(level: Level, seed: u64) -> Session {
        Session::new("s1", "tester", level, seed, Assets::builtin(), SessionConfig::default()).unwrap()
    }

    fn forward() -> ControlInput {
        let mut i = neutral_input();
        i.stick = [0.0, 1.0];
        i
    }

    #[test]
    fn waits_in_init_until_first_input() {
        let mut s = session(Level::Easy, 1);
        for _ in 0..10 {
            s.tick().unwrap();
        }
        assert_eq!(s.phase(), EpisodePhase::Init);
        assert_eq!(s.world().tick, 0);
        s.set_input(forward()).unwrap();
        s.tick().unwrap();
        assert_eq!(s.phase(), EpisodePhase::InProgress);
        assert_eq!(s.world().tick, 1);
    }

    #[test]
    fn last_writer_wins_and_inputs_are_sticky() {
        let mut s = session(Level::Easy, 2);
        let mut a = neutral_input();
        a.stick = [0.5, 0.0];
        s.set_input(a).unwrap();
        s.set_input(forward()).unwrap();
        s.tick().unwrap();
        for _ in 0..4 {
            s.tick().unwrap();
        }
        let tl = &s.timeline;
        assert_eq!(tl.len(), 1);
        assert_eq!(tl[0].input, forward());
        assert!(s.frames.iter().all(|f| f.chassis.v > 0.0 && f.chassis.w == 0.0));
    }

    #[test]
    fn out_of_range_input_is_clamped_and_flagged() {
        let mut s = session(Level::Easy, 3);
        let mut i = neutral_input();
        i.stick = [0.0, 3.0];
        i.hands[1].trigger = 1.5;
        assert_eq!(s.set_input(i).unwrap(), InputAck::Clamped);
        assert_eq!(s.set_input(forward()).unwrap(), InputAck::Accepted);
        let mut bad = neutral_input();
        bad.stick[1] = f64::INFINITY;
        assert!(s.set_input(bad).is_err());
    }

    #[test]
    fn broadcast_every_second_tick() {
        let mut s = session(Level::Easy, 4);
        s.set_input(forward()).unwrap();
        let n = (0..50).filter(|_| s.tick().unwrap().snapshot.is_some()).count();
        assert_eq!(n, 25);
    }

    #[test]
    fn snapshot_does_not_mutate() {
        let mut s = session(Level::Hard, 5);
        s.set_input(forward()).unwrap();
        for _ in 0..7 {
            s.tick().unwrap();
        }
        let before = serde_json::to_string(s.world()).unwrap();
        let _ = s.snapshot();
        assert_eq!(serde_json::to_string(s.world()).unwrap(), before);
    }

    #[test]
    fn abort_discards_frames_and_rejects_later_input() {
        let mut s = session(Level::Easy, 6);
        s.set_input(forward()).unwrap();
        for _ in 0..5 {
            s.tick().unwrap();
        }
        let end = s.abort(EndReason::UserAbort).unwrap();
        assert!(!end.success && end.frames.is_empty() && end.meta.is_none());
        assert_eq!(s.set_input(forward()).unwrap(), InputAck::Ignored);
        let ticks = (DEFAULT_RESET_DELAY / s.dt()).round() as usize;
        let mut regenerated = false;
        for _ in 0..ticks + 1 {
            regenerated |= s.tick().unwrap().new_scene;
        }
        assert!(regenerated);
        assert_eq!(s.phase(), EpisodePhase::Init);
        assert_eq!(s.seed(), episode_seed(6, 1));
    }

    #[test]
    fn wire_messages_round_trip() {
        let hello = ClientMessage::new(None, ClientBody::Hello { player: "ana".into(), difficulty: "easy".into(), seed: None });
        let text = hello.to_json();
        assert!(text.contains("\"type\":\"hello\"") && text.contains("\"protocol_version\":1"));
        assert_eq!(parse_client_message(&text).unwrap(), hello);

        let mut c = neutral_input();
        c.stick = [0.25, -0.5];
        c.hands[Hand::Right.index()].clutch = true;
        c.hands[Hand::Right.index()].position = Vec3::new(0.1, 0.2, 0.3);
        let msg = ClientMessage::new(Some("abc"), ClientBody::Input(InputMessage::from_control_input(&c)));
        let back = parse_client_message(&msg.to_json()).unwrap();
        match back.body {
            ClientBody::Input(m) => assert_eq!(m.to_control_input(), c),
            other => panic!("{other:?}"),
        }
        let wrong = msg.to_json().replace("\"protocol_version\":1", "\"protocol_version\":9");
        assert_eq!(parse_client_message(&wrong).unwrap_err().0, ErrorCode::BadVersion);
        assert_eq!(parse_client_message("{\"type\":\"nope\"}").unwrap_err().0, ErrorCode::BadMessage);

        let end = ServerMessage::new(
            Some("abc"),
            ServerBody::EpisodeEnd { success: true, reason: EndReason::Completed, completion_time: Some(40.2), rank: Some(1), episode_id: None },
        );
        let v: serde_json::Value = serde_json::from_str(&end.to_json()).unwrap();
        assert_eq!(v["type"], "episode_end");
        assert_eq!(v["T_i"], 40.2);
        assert_eq!(v["session_id"], "abc");
    }
}
