//! Fixed-timestep kinematic world: unicycle base, joint servo, grippers,
//! grasp attachment, instant settling on release and goal detection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::math::{raycast_down, wrap_angle, Aabb, Pose, Quat, Rect, Surface, Vec3};
use crate::robot::control::{drive_joints, step_gripper, ChassisCommand, GRASP_THRESHOLD, GRIPPER_RATE_DEG, SERVO_OMEGA};
use crate::robot::{heading_vector, BaseState, Hand, RobotModel, ARM_DOF, BODY_DOF, HAND_DOF, WAIST_RANGE};
use crate::scene::{Bounds2, Category, GoalTrigger, SceneInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub grasp_radius: f64,
    /// Fraction of the grasp angle the mean finger angle must reach.
    pub grasp_closure: f64,
    /// Largest angle between the hand's up axis and the object's up axis
    /// (either direction) that still allows a grasp.
    pub grasp_axis_deg: f64,
    pub grasp_threshold: f64,
    pub gripper_rate_deg: f64,
    pub servo_omega: f64,
    /// Count trash that is inside a trigger while still held.
    pub count_held: bool,
    /// Keeps the base center this far inside the room walls.
    pub base_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.02,
            grasp_radius: 0.08,
            grasp_closure: 0.8,
            grasp_axis_deg: 60.0,
            grasp_threshold: GRASP_THRESHOLD,
            gripper_rate_deg: GRIPPER_RATE_DEG,
            servo_omega: SERVO_OMEGA,
            count_held: false,
            base_radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub category: Category,
    pub interactable: bool,
    /// Half extents in the object's local frame.
    pub half: Vec3,
    pub position: Vec3,
    pub orientation: Quat,
    pub attached: Option<Hand>,
    /// Object pose in the hand frame while attached.
    pub grasp_offset: Option<Pose>,
}

impl WorldObject {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::of_rotated_box(self.position, self.half, self.orientation)
    }

    pub fn base_height(&self) -> f64 {
        self.aabb().min.y
    }
}

/// Joint targets, triggers and chassis command applied by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCommand {
    pub chassis: ChassisCommand,
    pub joint_targets: [f64; BODY_DOF],
    pub triggers: [f64; 2],
    /// Pelvis height offset from the gait.
    pub bob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    pub base: BaseState,
    pub q: [f64; BODY_DOF],
    pub qd: [f64; BODY_DOF],
    pub hand_q: [[f64; HAND_DOF]; 2],
    pub objects: Vec<WorldObject>,
    pub held: [Option<u32>; 2],
    pub goal_triggers: Vec<GoalTrigger>,
    pub surfaces: Vec<Surface>,
    pub room: Bounds2,
    pub deposited: BTreeSet<u32>,
}

impl WorldState {
    pub fn new(scene: &SceneInstance, model: &RobotModel, dt: f64) -> WorldState {
        let objects = scene
            .objects
            .iter()
            .map(|o| WorldObject {
                id: o.id,
                category: o.category,
                interactable: o.interactable,
                half: o.size * (0.5 * o.scale),
                position: o.position,
                orientation: o.orientation,
                attached: None,
                grasp_offset: None,
            })
            .collect();
        let mut hand_q = [[0.0; HAND_DOF]; 2];
        for hand in Hand::BOTH {
            hand_q[hand.index()] = model.hands[hand.index()].open;
        }
        WorldState {
            tick: 0,
            dt,
            base: BaseState {
                x: scene.robot_start.x,
                z: scene.robot_start.z,
                yaw: scene.robot_start.yaw,
                height: model.pelvis_height,
            },
            q: model.home_posture(),
            qd: [0.0; BODY_DOF],
            hand_q,
            objects,
            held: [None; 2],
            goal_triggers: scene.goal_triggers.clone(),
            surfaces: scene.surfaces.clone(),
            room: scene.room,
            deposited: BTreeSet::new(),
        }
    }

    /// Simulation time, derived from the integer tick count.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn object(&self, id: u32) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_index(&self, id: u32) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn arm_q(&self, hand: Hand) -> [f64; ARM_DOF] {
        let o = hand.arm_offset();
        self.q[o..o + ARM_DOF].try_into().expect("arm slice has ARM_DOF joints")
    }

    pub fn torso_pose(&self, model: &RobotModel) -> Pose {
        model.torso_pose(&self.base, &self.q[WAIST_RANGE])
    }

    /// Hand frame in the world.
    pub fn hand_pose(&self, model: &RobotModel, hand: Hand) -> Pose {
        self.torso_pose(model).compose(&model.arm_fk(hand, &self.arm_q(hand)).ee)
    }

    pub fn trash_remaining(&self) -> usize {
        self.objects.iter().filter(|o| o.category == Category::Trash && !self.deposited.contains(&o.id)).count()
    }
}

/// Advances the world by one step of `world.dt`.
pub fn step(world: &mut WorldState, model: &RobotModel, cmd: &StepCommand, cfg: &SimConfig) {
    let dt = world.dt;
    let (hx, hz) = heading_vector(world.base.yaw);
    let r = cfg.base_radius;
    let b = &world.room;
    world.base.x = (world.base.x + cmd.chassis.v * hx * dt).clamp(b.min_x + r, b.max_x - r);
    world.base.z = (world.base.z + cmd.chassis.v * hz * dt).clamp(b.min_z + r, b.max_z - r);
    world.base.yaw = wrap_angle(world.base.yaw + cmd.chassis.w * dt);
    world.base.height = model.pelvis_height + cmd.bob;

    drive_joints(model, &mut world.q, &mut world.qd, &cmd.joint_targets, dt, cfg.servo_omega);
    for hand in Hand::BOTH {
        let i = hand.index();
        world.hand_q[i] = step_gripper(
            &world.hand_q[i],
            cmd.triggers[i],
            &model.hands[i],
            cfg.gripper_rate_deg.to_radians(),
            cfg.grasp_threshold,
            dt,
        );
    }
    update_attached(world, model);
    for hand in Hand::BOTH {
        let i = hand.index();
        if world.held[i].is_some() && cmd.triggers[i] <= cfg.grasp_threshold {
            release(world, hand);
        } else if world.held[i].is_none() && cmd.triggers[i] > cfg.grasp_threshold {
            try_grasp(world, model, hand, cfg);
        }
    }
    world.tick += 1;
}

fn update_attached(world: &mut WorldState, model: &RobotModel) {
    for hand in Hand::BOTH {
        let Some(id) = world.held[hand.index()] else { continue };
        let hp = world.hand_pose(model, hand);
        let idx = world.object_index(id).expect("held object exists");
        let offset = world.objects[idx].grasp_offset.expect("held object has a grasp offset");
        let p = hp.compose(&offset);
        world.objects[idx].position = p.position;
        world.objects[idx].orientation = p.orientation;
    }
}

/// Attaches the nearest graspable object to `hand` if the fingers are
/// closed enough, the object is within the grasp radius and its up axis is
/// aligned with the hand's. Returns the attached id.
pub fn try_grasp(world: &mut WorldState, model: &RobotModel, hand: Hand, cfg: &SimConfig) -> Option<u32> {
    let i = hand.index();
    if world.held[i].is_some() {
        return None;
    }
    let grasp = &model.hands[i].grasp;
    let closure: f64 = world.hand_q[i].iter().sum::<f64>() / grasp.iter().sum::<f64>();
    if closure < cfg.grasp_closure {
        return None;
    }
    let hp = world.hand_pose(model, hand);
    let hand_up = hp.orientation.rotate(Vec3::Y);
    let min_cos = cfg.grasp_axis_deg.to_radians().cos();
    let best = world
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.interactable && o.attached.is_none() && !world.deposited.contains(&o.id))
        .filter(|(_, o)| o.orientation.rotate(Vec3::Y).dot(hand_up).abs() >= min_cos - 1e-12)
        .map(|(k, o)| (k, o.position.distance(hp.position)))
        .filter(|(_, d)| *d <= cfg.grasp_radius)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
    let o = &mut world.objects[best.0];
    o.attached = Some(hand);
    o.grasp_offset = Some(hp.inverse().compose(&o.pose()));
    world.held[i] = Some(o.id);
    Some(o.id)
}

/// Detaches whatever `hand` holds and settles it: into a bin when the
/// center is over a goal trigger footprint, otherwise onto the highest
/// support below it (the floor plane outside every surface).
pub fn release(world: &mut WorldState, hand: Hand) -> Option<u32> {
    let id = world.held[hand.index()].take()?;
    let idx = world.object_index(id).expect("held object exists");
    let (x, z) = (world.objects[idx].position.x, world.objects[idx].position.z);
    let support = world
        .goal_triggers
        .iter()
        .find(|t| t.volume.contains_xz(x, z))
        .map(|t| t.volume.min.y)
        .or_else(|| raycast_down(x, z, &world.surfaces))
        .unwrap_or(0.0);
    let o = &mut world.objects[idx];
    o.attached = None;
    o.grasp_offset = None;
    let lift = o.position.y - o.base_height();
    o.position.y = support + lift;
    Some(id)
}

/// Trash newly inside a goal trigger. Each object is reported once.
pub fn check_goal(world: &mut WorldState, cfg: &SimConfig) -> Vec<u32> {
    let mut out = Vec::new();
    for o in &world.objects {
        if o.category != Category::Trash || world.deposited.contains(&o.id) {
            continue;
        }
        if o.attached.is_some() && !cfg.count_held {
            continue;
        }
        if world.goal_triggers.iter().any(|t| t.volume.contains_point(o.position)) {
            out.push(o.id);
        }
    }
    world.deposited.extend(out.iter().copied());
    out
}

/// Footprint of a goal trigger, for planners.
pub fn trigger_rect(t: &GoalTrigger) -> Rect {
    Rect::axis_aligned(t.volume.min.x, t.volume.min.z, t.volume.max.x, t.volume.max.z)
}
