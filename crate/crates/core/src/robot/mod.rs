//! Humanoid model (29 body joints, 6 finger joints per hand), arm forward
//! kinematics, the arm IK solver and the operator control adapter.

pub mod control;
pub mod ik;

use serde::{Deserialize, Serialize};

use crate::math::{Pose, Quat, Vec3};

pub const BODY_DOF: usize = 29;
pub const LEG_DOF: usize = 12;
pub const WAIST_DOF: usize = 3;
pub const ARM_DOF: usize = 7;
pub const HAND_DOF: usize = 6;

pub const LEG_RANGE: std::ops::Range<usize> = 0..12;
pub const WAIST_RANGE: std::ops::Range<usize> = 12..15;
pub const ARM_RANGE: std::ops::Range<usize> = 15..29;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("malformed robot model: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid robot model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }

    /// First body-joint index of this arm's 7-joint chain.
    pub fn arm_offset(self) -> usize {
        ARM_RANGE.start + self.index() * ARM_DOF
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    Leg,
    Waist,
    ArmLeft,
    ArmRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub group: JointGroup,
    /// Rotation axis in the joint's parent frame.
    pub axis: [f64; 3],
    /// Translation from the previous joint frame, applied before rotating.
    pub offset: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
}

impl JointSpec {
    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandJointSpec {
    pub name: String,
    pub open_deg: f64,
    pub grasp_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandJointSets {
    pub left: Vec<HandJointSpec>,
    pub right: Vec<HandJointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    name: String,
    pelvis_height: f64,
    body_joints: Vec<JointSpec>,
    arm_home: [f64; ARM_DOF],
    hand_joints: HandJointSets,
}

/// Hand joint angles in radians, converted once at load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandAngles {
    pub open: [f64; HAND_DOF],
    pub grasp: [f64; HAND_DOF],
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub pelvis_height: f64,
    pub joints: Vec<JointSpec>,
    pub arm_home: [f64; ARM_DOF],
    pub hands: [HandAngles; 2],
    pub hand_joint_names: [Vec<String>; 2],
    /// Fixed rotation from the last wrist frame to the hand frame, chosen so
    /// the hand frame equals the torso frame at the home pose.
    hand_mount: [Quat; 2],
    /// End-effector position at the home pose, torso frame.
    home_ee: [Vec3; 2],
}

impl RobotModel {
    pub fn builtin() -> RobotModel {
        RobotModel::from_json(include_str!("../../assets/robot_model.json")).expect("bundled robot model is valid")
    }

    pub fn from_json(text: &str) -> Result<RobotModel, ModelError> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Invalid(format!("unsupported format version {}", f.format_version)));
        }
        if f.body_joints.len() != BODY_DOF {
            return Err(ModelError::Invalid(format!("expected {BODY_DOF} body joints, got {}", f.body_joints.len())));
        }
        let expect = |r: std::ops::Range<usize>, g: JointGroup| f.body_joints[r].iter().all(|j| j.group == g);
        if !expect(LEG_RANGE, JointGroup::Leg)
            || !expect(WAIST_RANGE, JointGroup::Waist)
            || !expect(15..22, JointGroup::ArmLeft)
            || !expect(22..29, JointGroup::ArmRight)
        {
            return Err(ModelError::Invalid("joints must be ordered legs(12), waist(3), left arm(7), right arm(7)".into()));
        }
        for j in &f.body_joints {
            if !(j.lower < j.upper) {
                return Err(ModelError::Invalid(format!("joint {} has lower >= upper", j.name)));
            }
            if j.max_velocity <= 0.0 {
                return Err(ModelError::Invalid(format!("joint {} has non-positive max velocity", j.name)));
            }
            if Vec3::from_array(j.axis).normalized().is_none() {
                return Err(ModelError::Invalid(format!("joint {} has a zero axis", j.name)));
            }
        }
        for hand in [Hand::Left, Hand::Right] {
            let chain = &f.body_joints[hand.arm_offset() + 4..hand.arm_offset() + 7];
            let axis_ok = chain.iter().zip([Vec3::X, Vec3::Y, Vec3::Z]).all(|(j, want)| {
                let a = Vec3::from_array(j.axis);
                (a.dot(want).abs() - 1.0).abs() < 1e-12
            });
            if !axis_ok {
                return Err(ModelError::Invalid("wrist joints must rotate about +-x, +-y, +-z in that order".into()));
            }
            for (k, q) in f.arm_home.iter().enumerate() {
                let j = &f.body_joints[hand.arm_offset() + k];
                if *q < j.lower || *q > j.upper {
                    return Err(ModelError::Invalid(format!("arm home angle outside limits of {}", j.name)));
                }
            }
        }
        let hand_set = |v: &[HandJointSpec]| -> Result<HandAngles, ModelError> {
            if v.len() != HAND_DOF {
                return Err(ModelError::Invalid(format!("expected {HAND_DOF} joints per hand")));
            }
            let mut a = HandAngles { open: [0.0; HAND_DOF], grasp: [0.0; HAND_DOF] };
            for (i, h) in v.iter().enumerate() {
                a.open[i] = h.open_deg.to_radians();
                a.grasp[i] = h.grasp_deg.to_radians();
            }
            Ok(a)
        };
        let hands = [hand_set(&f.hand_joints.left)?, hand_set(&f.hand_joints.right)?];
        let names = |v: &[HandJointSpec]| v.iter().map(|h| h.name.clone()).collect::<Vec<_>>();

        let mut model = RobotModel {
            name: f.name,
            pelvis_height: f.pelvis_height,
            joints: f.body_joints,
            arm_home: f.arm_home,
            hands,
            hand_joint_names: [names(&f.hand_joints.left), names(&f.hand_joints.right)],
            hand_mount: [Quat::IDENTITY; 2],
            home_ee: [Vec3::ZERO; 2],
        };
        for hand in Hand::BOTH {
            let home = model.arm_fk(hand, &model.arm_home);
            model.hand_mount[hand.index()] = home.ee.orientation.inverse();
            model.home_ee[hand.index()] = home.ee.position;
        }
        Ok(model)
    }

    pub fn arm_joints(&self, hand: Hand) -> &[JointSpec] {
        &self.joints[hand.arm_offset()..hand.arm_offset() + ARM_DOF]
    }

    pub fn home_ee(&self, hand: Hand) -> Vec3 {
        self.home_ee[hand.index()]
    }

    /// Shoulder position (first arm joint origin) in the torso frame.
    pub fn shoulder(&self, hand: Hand) -> Vec3 {
        Vec3::from_array(self.arm_joints(hand)[0].offset)
    }

    /// Sum of link lengths after the shoulder: the radius of the reachable
    /// sphere.
    pub fn max_reach(&self, hand: Hand) -> f64 {
        self.arm_joints(hand)[1..].iter().map(|j| Vec3::from_array(j.offset).norm()).sum()
    }

    pub fn clamp_arm(&self, hand: Hand, q: &mut [f64; ARM_DOF]) {
        for (v, j) in q.iter_mut().zip(self.arm_joints(hand)) {
            *v = j.clamp(*v);
        }
    }

    /// Forward kinematics of one arm in the torso frame.
    pub fn arm_fk(&self, hand: Hand, q: &[f64; ARM_DOF]) -> ArmFk {
        let mut frame = Pose::IDENTITY;
        let mut origins = [Vec3::ZERO; ARM_DOF];
        let mut axes = [Vec3::ZERO; ARM_DOF];
        let mut after = [Quat::IDENTITY; ARM_DOF];
        for (k, j) in self.arm_joints(hand).iter().enumerate() {
            frame.position = frame.transform_point(Vec3::from_array(j.offset));
            let axis = Vec3::from_array(j.axis);
            origins[k] = frame.position;
            axes[k] = frame.orientation.rotate(axis);
            frame.orientation = frame.orientation * Quat::from_axis_angle(axis, q[k]);
            after[k] = frame.orientation;
        }
        let ee = Pose::new(frame.position, frame.orientation * self.hand_mount[hand.index()]);
        ArmFk { origins, axes, after, ee }
    }

    /// Rotation from the frame after the elbow to the hand frame, given the
    /// hand orientation in the torso frame. Used to derive wrist angles.
    pub(crate) fn hand_mount(&self, hand: Hand) -> Quat {
        self.hand_mount[hand.index()]
    }

    /// Default standing body posture (legs slightly flexed, arms at home).
    pub fn home_posture(&self) -> [f64; BODY_DOF] {
        let mut q = [0.0; BODY_DOF];
        for hand in Hand::BOTH {
            q[hand.arm_offset()..hand.arm_offset() + ARM_DOF].copy_from_slice(&self.arm_home);
        }
        q
    }

    /// Pose of the torso frame in the world for a base pose, vertical bob
    /// and waist angles.
    pub fn torso_pose(&self, base: &BaseState, waist: &[f64]) -> Pose {
        let mut o = base_orientation(base.yaw);
        for (j, q) in self.joints[WAIST_RANGE].iter().zip(waist) {
            o = o * Quat::from_axis_angle(Vec3::from_array(j.axis), *q);
        }
        Pose::new(Vec3::new(base.x, base.height, base.z), o)
    }
}

/// World orientation for a base heading. At yaw 0 the robot faces `-z`.
pub fn base_orientation(yaw: f64) -> Quat {
    Quat::from_yaw(yaw)
}

/// Unit forward direction on the floor for a heading.
pub fn heading_vector(yaw: f64) -> (f64, f64) {
    (-yaw.sin(), -yaw.cos())
}

/// Planar base state plus pelvis height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseState {
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct ArmFk {
    /// Joint origins, torso frame.
    pub origins: [Vec3; ARM_DOF],
    /// Joint axes, torso frame.
    pub axes: [Vec3; ARM_DOF],
    /// Link orientation after each joint's rotation.
    pub after: [Quat; ARM_DOF],
    /// Hand frame.
    pub ee: Pose,
}
