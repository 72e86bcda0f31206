//! Operator input to robot commands: chassis mapping, clutch-mode IK
//! targets, wrist increments, gripper drive, command smoothing, the joint
//! servo and the gait oscillator.

use serde::{Deserialize, Serialize};

use super::ik::{solve_arm_ik, HandTarget, IkConfig, IkError};
use super::{Hand, HandAngles, RobotModel, ARM_DOF, BODY_DOF, HAND_DOF, LEG_RANGE, WAIST_RANGE};
use crate::math::{clamp_incremental_rotation, Pose, Quat, Vec3};

pub const DEFAULT_V_MAX: f64 = 0.8;
pub const DEFAULT_W_MAX: f64 = 1.2;
pub const STICK_DEADZONE: f64 = 0.05;
pub const GRIPPER_RATE_DEG: f64 = 200.0;
pub const GRASP_THRESHOLD: f64 = 0.5;
pub const WRIST_LIMIT_DEG: f64 = 45.0;
pub const SMOOTHING_ALPHA: f64 = 0.9;
pub const GAIT_FREQUENCY_HZ: f64 = 1.5;
pub const SERVO_OMEGA: f64 = 20.0;
/// Target displacement (meters) above which a frame counts as IK-active.
pub const IK_MOVE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("control input is not finite")]
    NonFiniteInput,
    #[error(transparent)]
    Ik(#[from] IkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandInput {
    pub clutch: bool,
    /// Controller position in the operator frame.
    pub position: Vec3,
    pub orientation: Quat,
    pub trigger: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Left thumbstick `[x, y]`, each in `[-1, 1]`; `y = 1` is forward.
    pub stick: [f64; 2],
    /// Indexed by [`Hand::index`].
    pub hands: [HandInput; 2],
    /// Operator camera pose in the operator frame.
    pub camera: Pose,
}

impl ControlInput {
    pub fn is_finite(&self) -> bool {
        self.stick.iter().all(|v| v.is_finite())
            && self.hands.iter().all(|h| {
                h.position.is_finite() && h.orientation.is_finite() && h.trigger.is_finite()
            })
            && self.camera.position.is_finite()
            && self.camera.orientation.is_finite()
    }

    /// Copy with axes clamped to `[-1, 1]` and triggers to `[0, 1]`.
    pub fn clamped(&self) -> ControlInput {
        let mut c = *self;
        for a in &mut c.stick {
            *a = a.clamp(-1.0, 1.0);
        }
        for h in &mut c.hands {
            h.trigger = h.trigger.clamp(0.0, 1.0);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChassisCommand {
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChassisLimits {
    pub v_max: f64,
    pub w_max: f64,
    pub deadzone: f64,
}

impl Default for ChassisLimits {
    fn default() -> Self {
        ChassisLimits { v_max: DEFAULT_V_MAX, w_max: DEFAULT_W_MAX, deadzone: STICK_DEADZONE }
    }
}

/// Linear stick mapping; axes below the deadzone snap to zero. A rightward
/// stick turns clockwise (negative yaw rate).
pub fn map_chassis(stick: [f64; 2], limits: &ChassisLimits) -> ChassisCommand {
    let snap = |a: f64| if a.abs() < limits.deadzone { 0.0 } else { a.clamp(-1.0, 1.0) };
    ChassisCommand { v: snap(stick[1]) * limits.v_max, w: -snap(stick[0]) * limits.w_max }
}

/// Per-hand IK target clamp box, torso frame, relative to the arm home.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl ClampBox {
    pub fn right() -> ClampBox {
        ClampBox { min: Vec3::new(-0.08, -0.08, -0.15), max: Vec3::new(0.15, 0.35, 0.08) }
    }

    pub fn left() -> ClampBox {
        let r = ClampBox::right();
        ClampBox { min: Vec3::new(-r.max.x, r.min.y, r.min.z), max: Vec3::new(-r.min.x, r.max.y, r.max.z) }
    }

    pub fn for_hand(hand: Hand) -> ClampBox {
        match hand {
            Hand::Left => ClampBox::left(),
            Hand::Right => ClampBox::right(),
        }
    }

    pub fn both() -> [ClampBox; 2] {
        [ClampBox::left(), ClampBox::right()]
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y), p.z.clamp(self.min.z, self.max.z))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.clamp(p) == p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutchAnchor {
    pub p_grip: Vec3,
    pub q0: Vec3,
    pub controller_orientation: Quat,
    pub wrist: Quat,
}

/// Clutch state for both hands. A hand is engaged exactly when it has an
/// anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutchState {
    pub anchors: [Option<ClutchAnchor>; 2],
    pub scale: [Vec3; 2],
}

impl Default for ClutchState {
    fn default() -> Self {
        ClutchState { anchors: [None; 2], scale: [Vec3::new(1.0, 1.0, 1.0); 2] }
    }
}

impl ClutchState {
    pub fn engaged(&self, hand: Hand) -> bool {
        self.anchors[hand.index()].is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IkTargets {
    /// Indexed by [`Hand::index`].
    pub hands: [HandTarget; 2],
}

/// Advances the clutch for both hands and returns the new IK position
/// targets. Wrist orientations are carried through unchanged.
pub fn update_clutch(
    state: &ClutchState,
    input: &ControlInput,
    current: &IkTargets,
    boxes: &[ClampBox; 2],
) -> (ClutchState, IkTargets) {
    let mut next = state.clone();
    let mut targets = *current;
    let to_camera = input.camera.orientation.inverse();
    for hand in Hand::BOTH {
        let i = hand.index();
        let h = &input.hands[i];
        match (state.anchors[i], h.clutch) {
            (None, true) => {
                next.anchors[i] = Some(ClutchAnchor {
                    p_grip: h.position,
                    q0: current.hands[i].position,
                    controller_orientation: h.orientation,
                    wrist: current.hands[i].wrist,
                });
            }
            (Some(a), true) => {
                let dp = to_camera.rotate(h.position - a.p_grip).component_mul(state.scale[i]);
                targets.hands[i].position = boxes[i].clamp(a.q0 + dp);
            }
            (_, false) => next.anchors[i] = None,
        }
    }
    (next, targets)
}

/// Wrist orientation for `hand`: the controller's rotation since the clutch
/// anchor, limited per Euler axis, applied on top of the anchored wrist.
/// Returns `current` when the clutch is not engaged.
pub fn update_wrist(state: &ClutchState, input: &ControlInput, hand: Hand, current: Quat, limit_rad: f64) -> Quat {
    match state.anchors[hand.index()] {
        None => current,
        Some(a) => {
            let delta = a.controller_orientation.inverse() * input.hands[hand.index()].orientation;
            let w = a.wrist * clamp_incremental_rotation(delta, limit_rad);
            clamp_incremental_rotation(w, limit_rad)
        }
    }
}

/// Moves each finger joint toward the grasp (trigger above `threshold`) or
/// open angles at `rate` rad/s, stopping exactly at the target.
pub fn step_gripper(
    current: &[f64; HAND_DOF],
    trigger: f64,
    angles: &HandAngles,
    rate: f64,
    threshold: f64,
    dt: f64,
) -> [f64; HAND_DOF] {
    let target = if trigger > threshold { &angles.grasp } else { &angles.open };
    let step = rate * dt;
    std::array::from_fn(|k| {
        let d = target[k] - current[k];
        if d.abs() <= step + 1e-12 {
            target[k]
        } else {
            current[k] + step.copysign(d)
        }
    })
}

/// Exponential smoothing, `u = alpha * u_prev + (1 - alpha) * cmd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFilter {
    alpha: f64,
    state: Option<Vec<f64>>,
}

impl SmoothingFilter {
    /// Filter whose state initialises to the first command it sees.
    pub fn new(alpha: f64) -> SmoothingFilter {
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        SmoothingFilter { alpha, state: None }
    }

    pub fn with_state(alpha: f64, state: Vec<f64>) -> SmoothingFilter {
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        SmoothingFilter { alpha, state: Some(state) }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn state(&self) -> Option<&[f64]> {
        self.state.as_deref()
    }

    pub fn smooth(&mut self, cmd: &[f64]) -> Vec<f64> {
        let a = self.alpha;
        let out: Vec<f64> = match &self.state {
            Some(prev) if prev.len() == cmd.len() => {
                prev.iter().zip(cmd).map(|(p, c)| a * p + (1.0 - a) * c).collect()
            }
            _ => cmd.to_vec(),
        };
        self.state = Some(out.clone());
        out
    }
}

/// One step of a critically damped position servo with natural frequency
/// `omega`, per joint. Steps are limited to the joint's max velocity, never
/// cross the target, and positions are clamped to the joint limits.
pub fn drive_joints(
    model: &RobotModel,
    q: &mut [f64; BODY_DOF],
    qd: &mut [f64; BODY_DOF],
    target: &[f64; BODY_DOF],
    dt: f64,
    omega: f64,
) {
    let decay = (-omega * dt).exp();
    for (k, j) in model.joints.iter().enumerate() {
        let goal = j.clamp(target[k]);
        let e0 = q[k] - goal;
        let v0 = qd[k];
        let c = v0 + omega * e0;
        let e1 = (e0 + c * dt) * decay;
        let mut v1 = (v0 - omega * c * dt) * decay;
        let max_step = j.max_velocity * dt;
        let mut step = (goal + e1) - q[k];
        if step.abs() > max_step {
            step = max_step.copysign(step);
            v1 = v1.clamp(-j.max_velocity, j.max_velocity);
        }
        let mut next = q[k] + step;
        if (next - goal) * e0 < 0.0 || (e0 == 0.0 && v0 == 0.0) {
            next = goal;
            v1 = 0.0;
        }
        let clamped = j.clamp(next);
        if clamped != next {
            v1 = 0.0;
        }
        q[k] = clamped;
        qd[k] = v1;
    }
}

/// Leg and waist posture for a gait phase (radians) and normalised speed in
/// `[0, 1]`, plus the pelvis height offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitPose {
    pub legs: [f64; 12],
    pub waist: [f64; 3],
    pub bob: f64,
}

pub fn gait(phase: f64, speed: f64) -> GaitPose {
    let a = speed.clamp(0.0, 1.0);
    let mut legs = [0.0; 12];
    for (side, offset) in [(0usize, 0.0), (1, std::f64::consts::PI)] {
        let p = phase + offset;
        let hip = -0.15 + 0.35 * a * p.sin();
        let knee = 0.3 + 0.25 * a * (1.0 - p.cos());
        let base = side * 6;
        legs[base] = hip;
        legs[base + 3] = knee;
        legs[base + 4] = -0.15 - 0.5 * (hip + 0.15) - 0.3 * (knee - 0.3);
    }
    GaitPose {
        legs,
        waist: [0.08 * a * phase.sin(), 0.03 * a * phase.cos(), 0.0],
        bob: 0.015 * a * (2.0 * phase).cos(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub chassis: ChassisLimits,
    pub clutch_scale: [Vec3; 2],
    pub clamp_boxes: [ClampBox; 2],
    pub wrist_limit_deg: f64,
    pub grasp_threshold: f64,
    pub gripper_rate_deg: f64,
    pub smoothing_alpha: f64,
    pub servo_omega: f64,
    pub gait_frequency_hz: f64,
    pub ik: IkConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            chassis: ChassisLimits::default(),
            clutch_scale: [Vec3::new(1.0, 1.0, 1.0); 2],
            clamp_boxes: ClampBox::both(),
            wrist_limit_deg: WRIST_LIMIT_DEG,
            grasp_threshold: GRASP_THRESHOLD,
            gripper_rate_deg: GRIPPER_RATE_DEG,
            smoothing_alpha: SMOOTHING_ALPHA,
            servo_omega: SERVO_OMEGA,
            gait_frequency_hz: GAIT_FREQUENCY_HZ,
            ik: IkConfig::default(),
        }
    }
}

/// Output of one controller tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub chassis: ChassisCommand,
    pub targets: IkTargets,
    pub raw: [f64; BODY_DOF],
    pub smoothed: [f64; BODY_DOF],
    pub triggers: [f64; 2],
    pub ik_reached: [bool; 2],
    /// Whether each hand's IK position target moved more than
    /// [`IK_MOVE_EPS`] this tick.
    pub ik_moved: [bool; 2],
    pub bob: f64,
}

/// Control state owned by one session.
#[derive(Debug, Clone)]
pub struct RobotController {
    model: RobotModel,
    config: ControlConfig,
    clutch: ClutchState,
    targets: IkTargets,
    arm_q: [[f64; ARM_DOF]; 2],
    ik_reached: [bool; 2],
    filter: SmoothingFilter,
    phase: f64,
}

impl RobotController {
    pub fn new(model: RobotModel, config: ControlConfig) -> RobotController {
        let clutch = ClutchState { anchors: [None; 2], scale: config.clutch_scale };
        let filter = SmoothingFilter::new(config.smoothing_alpha);
        let arm_q = [model.arm_home; 2];
        RobotController {
            model,
            config,
            clutch,
            targets: IkTargets::default(),
            arm_q,
            ik_reached: [true; 2],
            filter,
            phase: 0.0,
        }
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn targets(&self) -> &IkTargets {
        &self.targets
    }

    pub fn clutch(&self) -> &ClutchState {
        &self.clutch
    }

    pub fn tick(&mut self, input: &ControlInput, dt: f64) -> Result<ControlCommand, ControlError> {
        if !input.is_finite() {
            return Err(ControlError::NonFiniteInput);
        }
        let input = input.clamped();
        let chassis = map_chassis(input.stick, &self.config.chassis);

        let (clutch, mut targets) = update_clutch(&self.clutch, &input, &self.targets, &self.config.clamp_boxes);
        let limit = self.config.wrist_limit_deg.to_radians();
        for hand in Hand::BOTH {
            let i = hand.index();
            targets.hands[i].wrist = update_wrist(&clutch, &input, hand, targets.hands[i].wrist, limit);
        }

        let mut ik_moved = [false; 2];
        for hand in Hand::BOTH {
            let i = hand.index();
            let (old, new) = (&self.targets.hands[i], &targets.hands[i]);
            if old.position == new.position && old.wrist == new.wrist {
                continue;
            }
            ik_moved[i] = old.position.distance(new.position) > IK_MOVE_EPS;
            let sol = solve_arm_ik(&self.model, hand, new, &self.arm_q[i], &self.config.ik)?;
            self.arm_q[i] = sol.joints;
            self.ik_reached[i] = sol.reached;
        }
        self.clutch = clutch;
        self.targets = targets;

        let speed = chassis.v.abs() / self.config.chassis.v_max;
        let turning = chassis.w.abs() / self.config.chassis.w_max;
        let activity = speed.max(0.5 * turning);
        if activity > 0.0 {
            self.phase = (self.phase + std::f64::consts::TAU * self.config.gait_frequency_hz * dt)
                % std::f64::consts::TAU;
        }
        let g = gait(self.phase, activity);

        let mut raw = [0.0; BODY_DOF];
        raw[LEG_RANGE].copy_from_slice(&g.legs);
        raw[WAIST_RANGE].copy_from_slice(&g.waist);
        for hand in Hand::BOTH {
            let o = hand.arm_offset();
            raw[o..o + ARM_DOF].copy_from_slice(&self.arm_q[hand.index()]);
        }
        let s = self.filter.smooth(&raw);
        let mut smoothed = [0.0; BODY_DOF];
        smoothed.copy_from_slice(&s);

        Ok(ControlCommand {
            chassis,
            targets,
            raw,
            smoothed,
            triggers: [input.hands[0].trigger, input.hands[1].trigger],
            ik_reached: self.ik_reached,
            ik_moved,
            bob: g.bob,
        })
    }
}
