//! Damped least-squares position IK for one 7-joint arm, with the wrist
//! joints derived in closed form from the requested hand orientation.

use serde::{Deserialize, Serialize};

use super::{Hand, RobotModel, ARM_DOF};
use crate::math::{Quat, Vec3};

/// Hand target: position offset from the arm's home end-effector position
/// (torso frame, meters) and hand orientation in the torso frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandTarget {
    pub position: Vec3,
    pub wrist: Quat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: u32,
    /// Early-exit tolerance (meters).
    pub tolerance: f64,
    /// A solution counts as reached below this error (meters).
    pub success_tolerance: f64,
    /// Largest joint change per iteration (radians).
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig { damping: 0.05, max_iterations: 100, tolerance: 1e-5, success_tolerance: 1e-3, max_step: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: [f64; ARM_DOF],
    pub reached: bool,
    pub position_error: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IkError {
    #[error("IK target is not finite")]
    NonFiniteTarget,
}

fn solve3(a: [[f64; 3]; 3], b: Vec3) -> Vec3 {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let inv_det = 1.0 / det;
    let col = |c: usize, v: Vec3| {
        let mut m = a;
        for (r, val) in v.to_array().into_iter().enumerate() {
            m[r][c] = val;
        }
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    Vec3::new(col(0, b) * inv_det, col(1, b) * inv_det, col(2, b) * inv_det)
}

fn dls_position(
    model: &RobotModel,
    hand: Hand,
    goal: Vec3,
    seed: &[f64; ARM_DOF],
    cfg: &IkConfig,
) -> ([f64; ARM_DOF], f64) {
    let mut q = *seed;
    model.clamp_arm(hand, &mut q);
    let lambda2 = cfg.damping * cfg.damping;
    let mut best = (q, f64::INFINITY);
    for _ in 0..=cfg.max_iterations {
        let fk = model.arm_fk(hand, &q);
        let e = goal - fk.ee.position;
        let err = e.norm();
        if err < best.1 {
            best = (q, err);
        }
        if err < cfg.tolerance {
            break;
        }
        let cols: [Vec3; ARM_DOF] = std::array::from_fn(|k| fk.axes[k].cross(fk.ee.position - fk.origins[k]));
        // (J J^T + lambda^2 I) y = e, then dq = J^T y.
        let mut a = [[0.0; 3]; 3];
        for c in &cols {
            let v = c.to_array();
            for r in 0..3 {
                for s in 0..3 {
                    a[r][s] += v[r] * v[s];
                }
            }
        }
        for (r, row) in a.iter_mut().enumerate() {
            row[r] += lambda2;
        }
        let y = solve3(a, e);
        let mut dq: [f64; ARM_DOF] = std::array::from_fn(|k| cols[k].dot(y));
        let peak = dq.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if peak > cfg.max_step {
            let s = cfg.max_step / peak;
            dq.iter_mut().for_each(|d| *d *= s);
        }
        for k in 0..ARM_DOF {
            q[k] += dq[k];
        }
        model.clamp_arm(hand, &mut q);
    }
    best
}

/// Wrist joint angles that realise `wrist` (hand orientation, torso frame)
/// given the proximal joints already in `q`. Writes `q[4..7]`.
pub fn set_wrist_joints(model: &RobotModel, hand: Hand, q: &mut [f64; ARM_DOF], wrist: Quat) {
    let fk = model.arm_fk(hand, q);
    let rel = fk.after[3].inverse() * wrist * model.hand_mount(hand).inverse();
    let e = rel.to_euler_xyz();
    let joints = model.arm_joints(hand);
    for k in 0..3 {
        let axis = joints[4 + k].axis;
        let sign = axis[k].signum();
        q[4 + k] = joints[4 + k].clamp(e[k] * sign);
    }
}

/// Solves one arm for `target`, starting from `seed`.
///
/// Position is solved by damped least squares. When the seed does not
/// converge the solver restarts from the home pose and a fixed set of
/// other postures; the best attempt is returned with `reached = false` if
/// no attempt got within the success tolerance.
pub fn solve_arm_ik(
    model: &RobotModel,
    hand: Hand,
    target: &HandTarget,
    seed: &[f64; ARM_DOF],
    cfg: &IkConfig,
) -> Result<IkSolution, IkError> {
    if !target.position.is_finite() || !target.wrist.is_finite() {
        return Err(IkError::NonFiniteTarget);
    }
    let requested = model.home_ee(hand) + target.position;
    // Goals outside the reach sphere are pulled onto it so the iteration
    // ends on the boundary point along the requested direction.
    let shoulder = model.shoulder(hand);
    let reach = model.max_reach(hand);
    let goal = match (requested - shoulder).normalized() {
        Some(dir) if (requested - shoulder).norm() > reach => shoulder + dir * reach,
        _ => requested,
    };
    let (mut q, mut err) = dls_position(model, hand, goal, seed, cfg);
    if err >= cfg.success_tolerance {
        for restart in restart_seeds(model, hand) {
            let (q2, e2) = dls_position(model, hand, goal, &restart, cfg);
            if e2 < err {
                (q, err) = (q2, e2);
            }
            if err < cfg.success_tolerance {
                break;
            }
        }
    }
    set_wrist_joints(model, hand, &mut q, target.wrist);
    if goal != requested {
        err = model.arm_fk(hand, &q).ee.position.distance(requested);
    }
    Ok(IkSolution { joints: q, reached: err < cfg.success_tolerance, position_error: err })
}

fn restart_seeds(model: &RobotModel, hand: Hand) -> Vec<[f64; ARM_DOF]> {
    let mut home = model.arm_home;
    model.clamp_arm(hand, &mut home);
    let mut raised = home;
    raised[0] = -0.6;
    raised[1] = 0.6;
    raised[3] = 0.8;
    let mut out_wide = home;
    out_wide[0] = 0.9;
    out_wide[2] = 0.8;
    out_wide[3] = 1.9;
    let mut seeds = vec![home, raised, out_wide];
    // Coarse grid over the shoulder and elbow for goals the hand-picked
    // seeds miss because of joint limits.
    let j = model.arm_joints(hand);
    let at = |k: usize, f: f64| j[k].lower + f * (j[k].upper - j[k].lower);
    for f0 in [0.15, 0.5, 0.85] {
        for f1 in [0.2, 0.8] {
            for f2 in [0.15, 0.5, 0.85] {
                for f3 in [0.25, 0.75] {
                    let mut q = home;
                    (q[0], q[1], q[2], q[3]) = (at(0, f0), at(1, f1), at(2, f2), at(3, f3));
                    seeds.push(q);
                }
            }
        }
    }
    for s in &mut seeds {
        model.clamp_arm(hand, s);
    }
    seeds
}
