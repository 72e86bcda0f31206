use playcollect_core::math::{Quat, Vec3};
use playcollect_core::rng::RngStream;
use playcollect_core::robot::ik::{solve_arm_ik, HandTarget, IkConfig};
use playcollect_core::robot::{Hand, RobotModel, ARM_DOF};

#[test]
fn thousand_forward_kinematics_targets_are_solved() {
    let m = RobotModel::builtin();
    let mut rng = RngStream::new(1000, "test/ik");
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let hand = if i % 2 == 0 { Hand::Left } else { Hand::Right };
        let j = m.arm_joints(hand);
        let q: [f64; ARM_DOF] = std::array::from_fn(|k| rng.uniform(j[k].lower, j[k].upper));
        let fk = m.arm_fk(hand, &q);
        let target = HandTarget { position: fk.ee.position - m.home_ee(hand), wrist: Quat::IDENTITY };
        let s = solve_arm_ik(&m, hand, &target, &m.arm_home, &IkConfig::default()).unwrap();
        // Independent check of the reported error through forward kinematics.
        let err = m.arm_fk(hand, &s.joints).ee.position.distance(fk.ee.position);
        assert!(err < 1e-3 && s.reached, "target {i}: error {err}");
        assert!((err - s.position_error).abs() < 1e-12);
        worst = worst.max(err);
    }
    assert!(worst < 1e-3);
}

#[test]
fn unreachable_targets_report_failure() {
    let m = RobotModel::builtin();
    let mut rng = RngStream::new(5, "test/ik-far");
    for i in 0..200 {
        let hand = if i % 2 == 0 { Hand::Left } else { Hand::Right };
        let dir = Vec3::new(rng.normal(), rng.normal(), rng.normal()).normalized().unwrap();
        let goal = m.shoulder(hand) + dir * (m.max_reach(hand) + rng.uniform(0.01, 2.0));
        let target = HandTarget { position: goal - m.home_ee(hand), wrist: Quat::IDENTITY };
        let s = solve_arm_ik(&m, hand, &target, &m.arm_home, &IkConfig::default()).unwrap();
        assert!(!s.reached, "goal {i} beyond reach was marked reached");
        assert!(s.position_error > 1e-3);
        for (k, js) in m.arm_joints(hand).iter().enumerate() {
            assert!(s.joints[k] >= js.lower && s.joints[k] <= js.upper);
        }
    }
}
