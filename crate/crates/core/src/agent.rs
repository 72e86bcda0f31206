//! Scripted operator that completes the clean-up task headlessly.
//!
//! The agent drives the right arm only. Its clutch is engaged on the first
//! step with the controller at the origin, so afterwards the controller
//! position is the hand target offset and the controller orientation is the
//! wrist target.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::math::{wrap_angle, Aabb, Quat, Rect, Vec3};
use crate::robot::control::{ClampBox, ControlInput, HandInput, DEFAULT_V_MAX, DEFAULT_W_MAX, STICK_DEADZONE};
use crate::robot::{Hand, RobotModel};
use crate::rng::RngStream;
use crate::scene::{Category, Level};
use crate::session::{Assets, EndReason, EpisodeEnd, Session, SessionConfig, SessionError};
use crate::sim::{trigger_rect, WorldObject, WorldState};

const HAND: Hand = Hand::Right;
const ROOM_MARGIN: f64 = 0.3;
const INFLATE: f64 = 0.3;
const WAYPOINT_TOL: f64 = 0.15;
const STAND_TOL: f64 = 0.025;
const YAW_TOL: f64 = 0.02;
const TURN_IN_PLACE: f64 = 0.35;
const STICK_FLOOR: f64 = 0.06;
const GRASP_DIST: f64 = 0.025;
const LIFT: f64 = 0.12;
const ABOVE: f64 = 0.10;
const CARRY_TOL_MAX: f64 = 0.05;
const CARRY_TOL_MIN: f64 = 0.02;
const GRASP_RETRIES: u32 = 3;
const REPLANS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Standard deviation of zero-mean noise added to stick and controller
    /// position commands.
    pub noise_sigma: f64,
    /// Hand target speed, m/s.
    pub reach_speed: f64,
    /// Wrist tilt used for lying trash, degrees.
    pub wrist_tilt_deg: f64,
    /// Wrist rotation speed, deg/s.
    pub wrist_rate_deg: f64,
    /// Give up on an item after this many seconds.
    pub item_timeout: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { noise_sigma: 0.0, reach_speed: 0.25, wrist_tilt_deg: 40.0, wrist_rate_deg: 90.0, item_timeout: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentPhase {
    NavigateToTable,
    Reach,
    Grasp,
    NavigateToBin,
    Release,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubStep {
    Travel,
    Above,
    Orient,
    Descend,
    Close,
    Reopen,
    Lift,
    Align,
    Settle,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandPose {
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlan {
    pub phase: AgentPhase,
    pub sub: SubStep,
    pub item: Option<u32>,
    pub bin: Option<u32>,
    pub waypoints: VecDeque<(f64, f64)>,
    pub stand: Option<StandPose>,
    /// Hand target offset commanded through the controller.
    pub hand: Vec3,
    pub wrist: Quat,
    pub wrist_goal: Quat,
    /// Object position in the base frame while carried.
    pub carry: Vec3,
    pub engaged: bool,
    pub failed: Option<String>,
    ticks_in_step: u32,
    item_started: f64,
    retries: u32,
    replans: u32,
}

impl Default for AgentPlan {
    fn default() -> Self {
        AgentPlan {
            phase: AgentPhase::NavigateToTable,
            sub: SubStep::Travel,
            item: None,
            bin: None,
            waypoints: VecDeque::new(),
            stand: None,
            hand: Vec3::ZERO,
            wrist: Quat::IDENTITY,
            wrist_goal: Quat::IDENTITY,
            carry: Vec3::ZERO,
            engaged: false,
            failed: None,
            ticks_in_step: 0,
            item_started: 0.0,
            retries: 0,
            replans: 0,
        }
    }
}

impl AgentPlan {
    fn fail(&mut self, why: impl Into<String>) {
        self.failed.get_or_insert_with(|| why.into());
    }

    fn enter(&mut self, phase: AgentPhase, sub: SubStep) {
        self.phase = phase;
        self.sub = sub;
        self.ticks_in_step = 0;
    }

    fn set_sub(&mut self, sub: SubStep) {
        self.sub = sub;
        self.ticks_in_step = 0;
    }
}

/// Input that keeps the right clutch engaged at the current plan targets.
fn command(plan: &AgentPlan, stick: [f64; 2], trigger: f64) -> ControlInput {
    let mut input = ControlInput::default();
    input.stick = stick;
    input.hands[HAND.index()] =
        HandInput { clutch: true, position: plan.hand, orientation: plan.wrist, trigger: trigger.clamp(0.0, 1.0) };
    input
}

/// One policy step. Pure: the same observation and plan give the same
/// output.
pub fn policy_step(cfg: &AgentConfig, world: &WorldState, model: &RobotModel, plan: &AgentPlan) -> (ControlInput, AgentPlan) {
    let mut p = plan.clone();
    if !p.engaged {
        p.engaged = true;
        let mut input = ControlInput::default();
        input.hands[HAND.index()].clutch = true;
        return (input, p);
    }
    if p.failed.is_some() || p.phase == AgentPhase::Done {
        return (command(&p, [0.0, 0.0], 0.0), p);
    }
    p.ticks_in_step += 1;
    let now = world.time();
    if p.item.is_some() && now - p.item_started > cfg.item_timeout {
        p.fail("item timed out");
        return (command(&p, [0.0, 0.0], 0.0), p);
    }
    let dt = world.dt;
    let mut stick = [0.0, 0.0];
    let mut trigger = 0.0;
    let reach_step = cfg.reach_speed * dt;
    let tolerance_box = ClampBox::for_hand(HAND);

    match p.phase {
        AgentPhase::NavigateToTable => {
            let id = match p.item.filter(|id| pickable(world, *id)) {
                Some(id) => id,
                None => match nearest_trash(world) {
                    Some(id) => {
                        p.item = Some(id);
                        p.item_started = now;
                        p.retries = 0;
                        p.replans = 0;
                        p.stand = None;
                        id
                    }
                    None => {
                        p.enter(AgentPhase::Done, SubStep::Travel);
                        return (command(&p, [0.0, 0.0], 0.0), p);
                    }
                },
            };
            let obj = world.object(id).expect("chosen trash exists").clone();
            if p.stand.is_none() {
                match table_stand(world, model, &obj) {
                    Some(s) => set_route(&mut p, world, s, None),
                    None => {
                        p.fail("no standing pose next to the item");
                        return (command(&p, [0.0, 0.0], 0.0), p);
                    }
                }
            }
            let (s, arrived) = drive(world, &mut p);
            stick = s;
            if arrived {
                let need = hand_offset_for(world, model, obj.position);
                if tolerance_box.contains(need) {
                    p.enter(AgentPhase::Reach, if lying(&obj) { SubStep::Above } else { SubStep::Travel });
                    p.wrist_goal = if lying(&obj) { tilt_for(world, model, &obj, cfg.wrist_tilt_deg) } else { Quat::IDENTITY };
                } else if p.replans < REPLANS {
                    p.replans += 1;
                    p.stand = None;
                } else {
                    p.fail("item out of reach after repositioning");
                }
            }
        }
        AgentPhase::Reach => {
            let id = p.item.expect("reach has an item");
            let obj = world.object(id).expect("item exists").clone();
            let goal = tolerance_box.clamp(hand_offset_for(world, model, obj.position));
            match p.sub {
                SubStep::Above => {
                    if move_toward(&mut p.hand, goal + Vec3::new(0.0, ABOVE, 0.0), reach_step, &tolerance_box) {
                        p.set_sub(SubStep::Orient);
                    }
                }
                SubStep::Orient => {
                    let rate = cfg.wrist_rate_deg.to_radians() * dt;
                    if rotate_toward(&mut p.wrist, p.wrist_goal, rate) && p.ticks_in_step > 10 {
                        p.set_sub(SubStep::Descend);
                    }
                }
                _ => {
                    let done = move_toward(&mut p.hand, goal, reach_step, &tolerance_box);
                    let hp = world.hand_pose(model, HAND);
                    // Close anyway after a while; a miss is handled by the retry logic.
                    if done && (hp.position.distance(obj.position) < GRASP_DIST || p.ticks_in_step > 150) {
                        p.enter(AgentPhase::Grasp, SubStep::Close);
                    }
                }
            }
        }
        AgentPhase::Grasp => {
            let id = p.item.expect("grasp has an item");
            let obj = world.object(id).expect("item exists").clone();
            match p.sub {
                SubStep::Close => {
                    trigger = 1.0;
                    if world.held[HAND.index()] == Some(id) {
                        p.set_sub(SubStep::Lift);
                    } else if p.ticks_in_step > 40 {
                        p.retries += 1;
                        if p.retries > GRASP_RETRIES {
                            p.fail("grasp kept missing");
                        } else {
                            p.set_sub(SubStep::Reopen);
                        }
                    }
                }
                SubStep::Reopen => {
                    let goal = tolerance_box.clamp(hand_offset_for(world, model, obj.position));
                    let done = move_toward(&mut p.hand, goal, reach_step, &tolerance_box);
                    let hp = world.hand_pose(model, HAND);
                    if done && (hp.position.distance(obj.position) < GRASP_DIST || p.ticks_in_step > 100) {
                        p.set_sub(SubStep::Close);
                    }
                }
                _ => {
                    trigger = 1.0;
                    if world.held[HAND.index()] != Some(id) {
                        p.fail("item slipped");
                    } else {
                        let top = Vec3::new(p.hand.x, tolerance_box.max.y.min(p.hand.y + LIFT), p.hand.z);
                        let lifted = move_toward(&mut p.hand, top, reach_step, &tolerance_box);
                        if lifted && p.ticks_in_step > 25 {
                            p.carry = base_local(world, obj.position);
                            p.stand = None;
                            p.replans = 0;
                            p.enter(AgentPhase::NavigateToBin, SubStep::Travel);
                        }
                    }
                }
            }
        }
        AgentPhase::NavigateToBin => {
            trigger = 1.0;
            let id = p.item.expect("carry has an item");
            if world.held[HAND.index()] != Some(id) {
                p.fail("item dropped in transit");
                return (command(&p, [0.0, 0.0], 0.0), p);
            }
            if p.stand.is_none() {
                match bin_stand(world, p.carry) {
                    Some((s, bin)) => {
                        p.bin = Some(bin);
                        set_route(&mut p, world, s, Some(bin));
                    }
                    None => {
                        p.fail("no standing pose next to a bin");
                        return (command(&p, [0.0, 0.0], 0.0), p);
                    }
                }
            }
            let (s, arrived) = drive(world, &mut p);
            stick = s;
            if arrived {
                p.enter(AgentPhase::Release, SubStep::Align);
            }
        }
        AgentPhase::Release => {
            let id = p.item.expect("release has an item");
            let Some(trig) = p.bin.and_then(|b| world.goal_triggers.iter().find(|t| t.bin_id == b)) else {
                p.fail("bin vanished");
                return (command(&p, [0.0, 0.0], 0.0), p);
            };
            let c = trig.volume.center();
            let half = trig.volume.half_extents();
            let tol = (0.25 * half.x.min(half.z)).clamp(CARRY_TOL_MIN, CARRY_TOL_MAX);
            match p.sub {
                SubStep::Align => {
                    trigger = 1.0;
                    let obj = world.object(id).expect("item exists");
                    let err = Vec3::new(c.x - obj.position.x, 0.0, c.z - obj.position.z);
                    if err.norm() < tol && p.ticks_in_step > 10 {
                        p.set_sub(SubStep::Settle);
                    } else {
                        let torso = world.torso_pose(model);
                        let local = torso.orientation.inverse().rotate(err);
                        let step = Vec3::new(local.x, 0.0, local.z);
                        let n = step.norm();
                        let step = if n > reach_step { step * (reach_step / n) } else { step };
                        let next = tolerance_box.clamp(p.hand + step);
                        if next == p.hand && n > tol {
                            if p.replans < REPLANS {
                                p.replans += 1;
                                p.stand = None;
                                p.phase = AgentPhase::NavigateToBin;
                                p.sub = SubStep::Travel;
                            } else {
                                p.fail("bin out of reach");
                            }
                        }
                        p.hand = next;
                    }
                }
                SubStep::Settle => {
                    trigger = if p.ticks_in_step > 1 { 0.0 } else { 1.0 };
                    if world.deposited.contains(&id) {
                        p.set_sub(SubStep::Return);
                    } else if world.held[HAND.index()].is_none() {
                        p.fail("item missed the bin");
                    }
                }
                _ => {
                    let back = move_toward(&mut p.hand, Vec3::ZERO, reach_step, &tolerance_box);
                    let rate = cfg.wrist_rate_deg.to_radians() * dt;
                    let level = rotate_toward(&mut p.wrist, Quat::IDENTITY, rate);
                    if back && level {
                        p.item = None;
                        p.bin = None;
                        p.stand = None;
                        p.enter(AgentPhase::NavigateToTable, SubStep::Travel);
                    }
                }
            }
        }
        AgentPhase::Done => {}
    }
    (command(&p, stick, trigger), p)
}

/// Policy plus its noise source.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    pub config: AgentConfig,
    plan: AgentPlan,
    noise: RngStream,
}

impl ScriptedAgent {
    pub fn new(config: AgentConfig, seed: u64) -> ScriptedAgent {
        ScriptedAgent { config, plan: AgentPlan::default(), noise: RngStream::new(seed, "agent").derive("noise") }
    }

    pub fn plan(&self) -> &AgentPlan {
        &self.plan
    }

    pub fn failure(&self) -> Option<&str> {
        self.plan.failed.as_deref()
    }

    pub fn step(&mut self, world: &WorldState, model: &RobotModel) -> ControlInput {
        let (mut input, plan) = policy_step(&self.config, world, model, &self.plan);
        let first = !self.plan.engaged;
        self.plan = plan;
        let sigma = self.config.noise_sigma;
        if sigma > 0.0 && !first {
            for a in &mut input.stick {
                if *a != 0.0 {
                    *a += sigma * self.noise.normal();
                }
            }
            let h = &mut input.hands[HAND.index()];
            h.position += Vec3::new(self.noise.normal(), self.noise.normal(), self.noise.normal()) * (0.1 * sigma);
        }
        input.clamped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeRunOptions {
    /// Simulated time limit; unfinished episodes are aborted.
    pub time_limit: f64,
    /// Abort the episode at this simulated time.
    pub abort_at: Option<f64>,
}

/// Result of one scripted run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedRun {
    pub end: EpisodeEnd,
    pub failure: Option<String>,
}

/// Runs one episode with the scripted agent on a fresh session.
pub fn run_scripted_episode(
    assets: Assets,
    session_config: SessionConfig,
    agent_config: AgentConfig,
    player: &str,
    level: Level,
    seed: u64,
    options: EpisodeRunOptions,
) -> Result<ScriptedRun, SessionError> {
    let mut session = Session::new(format!("agent-{seed}"), player, level, seed, assets, session_config)?;
    let mut agent = ScriptedAgent::new(agent_config, seed);
    loop {
        let t = session.world().time();
        if options.abort_at.is_some_and(|a| t >= a) {
            let end = session.abort(EndReason::UserAbort).expect("episode is running");
            return Ok(ScriptedRun { end, failure: Some("aborted".into()) });
        }
        if t >= options.time_limit || agent.failure().is_some() {
            let failure = agent.failure().map(str::to_string).or_else(|| Some("time limit".into()));
            let reason = if t >= options.time_limit { EndReason::TimeLimit } else { EndReason::UserAbort };
            let end = match session.abort(reason) {
                Some(end) => end,
                None => EpisodeEnd {
                    success: false,
                    reason,
                    completion_time: None,
                    seed,
                    end_tick: 0,
                    frames: Vec::new(),
                    meta: None,
                    timeline: Vec::new(),
                },
            };
            return Ok(ScriptedRun { end, failure });
        }
        let input = agent.step(session.world(), session.model());
        session.set_input(input)?;
        if let Some(end) = session.tick()?.episode_end {
            return Ok(ScriptedRun { end, failure: None });
        }
    }
}

// ---- geometry helpers ----------------------------------------------------

fn pickable(world: &WorldState, id: u32) -> bool {
    world.object(id).is_some_and(|o| o.category == Category::Trash && !world.deposited.contains(&id) && o.interactable)
}

fn nearest_trash(world: &WorldState) -> Option<u32> {
    let (bx, bz) = (world.base.x, world.base.z);
    world
        .objects
        .iter()
        .filter(|o| pickable(world, o.id) && o.attached.is_none())
        .min_by(|a, b| {
            let da = (a.position.x - bx).hypot(a.position.z - bz);
            let db = (b.position.x - bx).hypot(b.position.z - bz);
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        })
        .map(|o| o.id)
}

fn lying(o: &WorldObject) -> bool {
    o.orientation.rotate(Vec3::Y).y.abs() < 0.5
}

fn yaw_of(q: Quat) -> f64 {
    let v = q.rotate(Vec3::X);
    (-v.z).atan2(v.x)
}

fn footprint(o: &WorldObject) -> Rect {
    Rect { center_x: o.position.x, center_z: o.position.z, half_x: o.half.x, half_z: o.half.z, yaw: yaw_of(o.orientation) }
}

/// Signed planar distance from a point to a rectangle; negative inside.
fn rect_distance(r: &Rect, x: f64, z: f64) -> f64 {
    let (lx, lz) = r.to_local(x, z);
    let dx = lx.abs() - r.half_x;
    let dz = lz.abs() - r.half_z;
    if dx <= 0.0 && dz <= 0.0 {
        dx.max(dz)
    } else {
        dx.max(0.0).hypot(dz.max(0.0))
    }
}

fn obstacles(world: &WorldState) -> impl Iterator<Item = &WorldObject> {
    world.objects.iter().filter(|o| o.category != Category::Trash)
}

fn clearance(world: &WorldState, x: f64, z: f64) -> f64 {
    obstacles(world).map(|o| rect_distance(&footprint(o), x, z)).fold(f64::INFINITY, f64::min)
}

fn inside_room(world: &WorldState, x: f64, z: f64, margin: f64) -> bool {
    let r = &world.room;
    x >= r.min_x + margin && x <= r.max_x - margin && z >= r.min_z + margin && z <= r.max_z - margin
}

/// Torso-frame target offset that puts the hand at a world point.
fn hand_offset_for(world: &WorldState, model: &RobotModel, p: Vec3) -> Vec3 {
    let local = world.torso_pose(model).inverse().transform_point(p);
    local - model.home_ee(HAND)
}

/// World point in the planar base frame (y kept relative to the pelvis).
fn base_local(world: &WorldState, p: Vec3) -> Vec3 {
    let d = Vec3::new(p.x - world.base.x, p.y, p.z - world.base.z);
    Quat::from_yaw(world.base.yaw).inverse().rotate(d)
}

fn base_for(target_x: f64, target_z: f64, local: Vec3, yaw: f64) -> (f64, f64) {
    let r = Quat::from_yaw(yaw).rotate(Vec3::new(local.x, 0.0, local.z));
    (target_x - r.x, target_z - r.z)
}

fn pick_stand(world: &WorldState, candidates: impl Iterator<Item = (StandPose, f64)>) -> Option<StandPose> {
    let (bx, bz) = (world.base.x, world.base.z);
    candidates
        .filter(|(s, _)| inside_room(world, s.x, s.z, ROOM_MARGIN))
        .filter_map(|(s, extra)| {
            let c = clearance(world, s.x, s.z);
            (c > 0.0).then(|| {
                let score = (s.x - bx).hypot(s.z - bz) + 4.0 * (0.15 - c).max(0.0) + extra;
                (s, score)
            })
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| s)
}

/// Base pose that puts a table item in front of the right hand.
fn table_stand(world: &WorldState, model: &RobotModel, obj: &WorldObject) -> Option<StandPose> {
    let home = model.home_ee(HAND);
    let shoulder = model.shoulder(HAND);
    let reach = model.max_reach(HAND) - 0.03;
    let pelvis = model.pelvis_height;
    let mut cands = Vec::new();
    for (k, fwd) in [-0.02, -0.06, -0.10, -0.13].into_iter().enumerate() {
        let local = Vec3::new(home.x + 0.03, obj.position.y - pelvis, home.z + fwd);
        if local.distance(shoulder) > reach {
            continue;
        }
        for i in 0..36 {
            let yaw = wrap_angle(i as f64 * TAU / 36.0);
            let (x, z) = base_for(obj.position.x, obj.position.z, local, yaw);
            cands.push((StandPose { x, z, yaw }, 0.3 * k as f64));
        }
    }
    pick_stand(world, cands.into_iter())
}

/// Base pose that puts the carried item over the nearest goal trigger.
fn bin_stand(world: &WorldState, carry: Vec3) -> Option<(StandPose, u32)> {
    let mut best: Option<(StandPose, u32, f64)> = None;
    for t in &world.goal_triggers {
        let c = trigger_rect(t);
        let cands = (0..36).map(|i| {
            let yaw = wrap_angle(i as f64 * TAU / 36.0);
            let (x, z) = base_for(c.center_x, c.center_z, carry, yaw);
            (StandPose { x, z, yaw }, 0.0)
        });
        if let Some(s) = pick_stand(world, cands) {
            let d = (s.x - world.base.x).hypot(s.z - world.base.z);
            if best.as_ref().is_none_or(|b| d < b.2) {
                best = Some((s, t.bin_id, d));
            }
        }
    }
    best.map(|(s, b, _)| (s, b))
}

/// Wrist target tilting the hand's up axis toward a lying item's axis.
fn tilt_for(world: &WorldState, model: &RobotModel, obj: &WorldObject, tilt_deg: f64) -> Quat {
    let torso = world.torso_pose(model).orientation;
    let axis_world = obj.orientation.rotate(Vec3::Y);
    let u = torso.inverse().rotate(axis_world);
    let flat = Vec3::new(u.x, 0.0, u.z).normalized().unwrap_or(Vec3::X);
    // Either sign of the item axis works; tilt outward for the right hand.
    let flat = if flat.x < 0.0 { flat * -1.0 } else { flat };
    let axis = Vec3::Y.cross(flat).normalized().unwrap_or(Vec3::Z);
    Quat::from_axis_angle(axis, tilt_deg.to_radians())
}

fn move_toward(p: &mut Vec3, goal: Vec3, max_step: f64, b: &ClampBox) -> bool {
    let goal = b.clamp(goal);
    let d = goal - *p;
    let n = d.norm();
    if n <= max_step {
        *p = goal;
        true
    } else {
        *p = b.clamp(*p + d * (max_step / n));
        false
    }
}

fn rotate_toward(q: &mut Quat, goal: Quat, max_angle: f64) -> bool {
    let a = q.angle_to(goal);
    if a <= max_angle {
        *q = goal;
        true
    } else {
        *q = q.slerp(goal, max_angle / a);
        false
    }
}

// ---- navigation ----------------------------------------------------------

fn segment_hits(a: (f64, f64), b: (f64, f64), bx: &Aabb) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, d, lo, hi) in [(a.0, b.0 - a.0, bx.min.x, bx.max.x), (a.1, b.1 - a.1, bx.min.z, bx.max.z)] {
        if d.abs() < 1e-12 {
            if p <= lo || p >= hi {
                return false;
            }
        } else {
            let (mut u0, mut u1) = ((lo - p) / d, (hi - p) / d);
            if u0 > u1 {
                std::mem::swap(&mut u0, &mut u1);
            }
            t0 = t0.max(u0);
            t1 = t1.min(u1);
            if t0 >= t1 {
                return false;
            }
        }
    }
    true
}

/// Shortest path around inflated obstacle boxes through their corners.
fn route(world: &WorldState, from: (f64, f64), to: (f64, f64), skip: Option<u32>) -> VecDeque<(f64, f64)> {
    let boxes: Vec<Aabb> = obstacles(world)
        .filter(|o| Some(o.id) != skip)
        .map(|o| o.aabb().inflated_xz(INFLATE))
        .filter(|b| !b.contains_xz(from.0, from.1) && !b.contains_xz(to.0, to.1))
        .collect();
    let mut nodes = vec![from, to];
    for b in &boxes {
        let e = 0.02;
        for (x, z) in [(b.min.x - e, b.min.z - e), (b.max.x + e, b.min.z - e), (b.max.x + e, b.max.z + e), (b.min.x - e, b.max.z + e)] {
            if inside_room(world, x, z, ROOM_MARGIN) && !boxes.iter().any(|o| o.contains_xz(x, z)) {
                nodes.push((x, z));
            }
        }
    }
    let n = nodes.len();
    let free = |i: usize, j: usize| !boxes.iter().any(|b| segment_hits(nodes[i], nodes[j], b));
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        if u == 1 {
            break;
        }
        for v in 0..n {
            if done[v] || !free(u, v) {
                continue;
            }
            let d = dist[u] + (nodes[u].0 - nodes[v].0).hypot(nodes[u].1 - nodes[v].1);
            if d < dist[v] {
                dist[v] = d;
                prev[v] = u;
            }
        }
    }
    let mut path = VecDeque::new();
    if !dist[1].is_finite() {
        path.push_back(to);
        return path;
    }
    let mut k = 1;
    while k != 0 {
        path.push_front(nodes[k]);
        k = prev[k];
    }
    path
}

fn set_route(p: &mut AgentPlan, world: &WorldState, stand: StandPose, skip: Option<u32>) {
    p.stand = Some(stand);
    p.waypoints = route(world, (world.base.x, world.base.z), (stand.x, stand.z), skip);
}

fn stick_axis(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if v.abs() < STICK_FLOOR.max(STICK_DEADZONE) {
        STICK_FLOOR * v.signum()
    } else {
        v.clamp(-1.0, 1.0)
    }
}

fn stick_for(v: f64, w: f64) -> [f64; 2] {
    [stick_axis(-w / DEFAULT_W_MAX), stick_axis(v / DEFAULT_V_MAX)]
}

/// Steers toward the next waypoint, then turns to the stand yaw. Returns
/// the stick command and whether the stand pose has been reached.
fn drive(world: &WorldState, p: &mut AgentPlan) -> ([f64; 2], bool) {
    let stand = p.stand.expect("driving needs a stand pose");
    let b = &world.base;
    while let Some(&(x, z)) = p.waypoints.front() {
        let last = p.waypoints.len() == 1;
        let d = (x - b.x).hypot(z - b.z);
        let tol = if last { STAND_TOL } else { WAYPOINT_TOL };
        if d > tol {
            let want = (-(x - b.x)).atan2(-(z - b.z));
            let mut e = wrap_angle(want - b.yaw);
            let mut dir = 1.0;
            if last && d < 0.4 && e.abs() > PI / 2.0 {
                e = wrap_angle(e + PI);
                dir = -1.0;
            }
            let w = (2.5 * e).clamp(-DEFAULT_W_MAX, DEFAULT_W_MAX);
            let v = if e.abs() > TURN_IN_PLACE { 0.0 } else { dir * (1.5 * d).min(DEFAULT_V_MAX) * e.cos() };
            return (stick_for(v, w), false);
        }
        p.waypoints.pop_front();
    }
    let off = (stand.x - b.x).hypot(stand.z - b.z);
    if off > 2.0 * STAND_TOL + 0.02 {
        p.waypoints.push_back((stand.x, stand.z));
        return ([0.0, 0.0], false);
    }
    let e = wrap_angle(stand.yaw - b.yaw);
    if e.abs() > YAW_TOL {
        let w = (2.5 * e).clamp(-DEFAULT_W_MAX, DEFAULT_W_MAX);
        return (stick_for(0.0, w), false);
    }
    ([0.0, 0.0], true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::heading_vector;

    #[test]
    fn steers_straight_at_a_waypoint_ahead() {
        let assets = Assets::builtin();
        let s = Session::new("t", "p", Level::Easy, 1, assets.clone(), SessionConfig::default()).unwrap();
        let w = s.world();
        let (hx, hz) = heading_vector(w.base.yaw);
        let target = (w.base.x + 2.0 * hx, w.base.z + 2.0 * hz);
        let mut p = AgentPlan { stand: Some(StandPose { x: target.0, z: target.1, yaw: w.base.yaw }), ..AgentPlan::default() };
        p.waypoints.push_back(target);
        let (stick, arrived) = drive(w, &mut p);
        assert!(!arrived);
        assert_eq!(stick[1], 1.0);
        assert!(stick[0].abs() < 1e-9);
    }

    #[test]
    fn closes_trigger_within_grasp_radius() {
        let assets = Assets::builtin();
        let s = Session::new("t", "p", Level::Easy, 1, assets.clone(), SessionConfig::default()).unwrap();
        let model = (*assets.model).clone();
        let hp = s.world().hand_pose(&model, HAND);
        let id = s.world().objects.iter().find(|o| o.category == Category::Trash).unwrap().id;
        let mut world = s.world().clone();
        let k = world.objects.iter().position(|o| o.id == id).unwrap();
        world.objects[k].position = hp.position + Vec3::new(0.01, 0.0, 0.0);
        let hand = hand_offset_for(&world, &model, world.objects[k].position);
        let plan =
            AgentPlan { engaged: true, phase: AgentPhase::Reach, sub: SubStep::Descend, item: Some(id), hand, ..AgentPlan::default() };
        let cfg = AgentConfig::default();
        let (_, plan) = policy_step(&cfg, &world, &model, &plan);
        assert_eq!(plan.phase, AgentPhase::Grasp);
        let (input, _) = policy_step(&cfg, &world, &model, &plan);
        assert!(input.hands[HAND.index()].trigger > 0.5);
    }

    #[test]
    fn easy_seed_one_completes() {
        let run = run_scripted_episode(
            Assets::builtin(),
            SessionConfig::default(),
            AgentConfig::default(),
            "agent",
            Level::Easy,
            1,
            EpisodeRunOptions { time_limit: 120.0, abort_at: None },
        )
        .unwrap();
        assert!(run.end.success, "{:?}", run.failure);
        assert_eq!(run.end.meta.as_ref().unwrap().total_frames, run.end.frames.len());
    }
}
