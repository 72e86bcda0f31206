use playcollect_core::agent::{policy_step, AgentConfig, AgentPlan};
use playcollect_core::math::{Quat, Vec3};
use playcollect_core::robot::control::{
    step_gripper, ClampBox, ControlConfig, ControlInput, HandInput, RobotController, SmoothingFilter,
    GRASP_THRESHOLD, GRIPPER_RATE_DEG,
};
use playcollect_core::robot::{Hand, RobotModel};
use playcollect_core::rng::RngStream;
use playcollect_core::scene::{builtin_templates, generate, Catalog, DifficultyConfig};
use playcollect_core::sim::{step, SimConfig, StepCommand, WorldState};
use proptest::prelude::*;

fn random_quat(rng: &mut RngStream) -> Quat {
    Quat::new(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized()
}

fn random_input(rng: &mut RngStream) -> ControlInput {
    let mut hand = || HandInput {
        clutch: rng.bernoulli(0.7),
        position: Vec3::new(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)),
        orientation: random_quat(rng),
        trigger: rng.uniform(-0.5, 1.5),
    };
    let hands = [hand(), hand()];
    ControlInput { stick: [rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)], hands, camera: Default::default() }
}

#[test]
fn ik_targets_stay_in_the_clamp_boxes() {
    let mut c = RobotController::new(RobotModel::builtin(), ControlConfig::default());
    let mut rng = RngStream::new(11, "test/clamp");
    let boxes = [ClampBox::left(), ClampBox::right()];
    for _ in 0..20_000 {
        let input = random_input(&mut rng);
        let cmd = c.tick(&input, 0.02).unwrap();
        for hand in Hand::BOTH {
            let p = cmd.targets.hands[hand.index()].position;
            let b = &boxes[hand.index()];
            assert!(p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y && p.z >= b.min.z && p.z <= b.max.z);
        }
    }
    assert_eq!(boxes[1].min, Vec3::new(-0.08, -0.08, -0.15));
    assert_eq!(boxes[1].max, Vec3::new(0.15, 0.35, 0.08));
    assert_eq!(boxes[0].min, Vec3::new(-0.15, -0.08, -0.15));
    assert_eq!(boxes[0].max, Vec3::new(0.08, 0.35, 0.08));
}

#[test]
fn smoothing_step_response_matches_closed_form() {
    let mut f = SmoothingFilter::with_state(0.9, vec![0.0]);
    for t in 1..=100 {
        let y = f.smooth(&[1.0])[0];
        let expected = 1.0 - 0.9f64.powi(t);
        assert!((y - expected).abs() <= 1e-12, "t={t}: {y} vs {expected}");
    }
}

#[test]
fn full_close_takes_the_predicted_frame_count() {
    let m = RobotModel::builtin();
    for hand in Hand::BOTH {
        let angles = &m.hands[hand.index()];
        for dt in [0.02, 0.01, 1.0 / 30.0] {
            let step_rad = GRIPPER_RATE_DEG.to_radians() * dt;
            let widest = angles.grasp.iter().zip(&angles.open).map(|(g, o)| (g - o).abs()).fold(0.0, f64::max);
            let expected = (widest / step_rad - 1e-9).ceil() as usize;
            let mut q = angles.open;
            let mut frames = 0;
            while q != angles.grasp {
                q = step_gripper(&q, 1.0, angles, GRIPPER_RATE_DEG.to_radians(), GRASP_THRESHOLD, dt);
                frames += 1;
                assert!(frames < 10_000);
            }
            assert_eq!(frames, expected, "dt {dt}");
        }
    }
    // 70 degrees at 200 deg/s and 50 Hz.
    assert_eq!((70.0f64 / (200.0 * 0.02)).ceil() as usize, 18);
}

proptest! {
    #[test]
    fn gripper_deltas_respect_the_rate(triggers in proptest::collection::vec(0.0f64..1.0, 1..300)) {
        let m = RobotModel::builtin();
        let angles = &m.hands[1];
        let dt = 0.02;
        let bound = GRIPPER_RATE_DEG.to_radians() * dt + 1e-9;
        let mut q = angles.open;
        for t in triggers {
            let next = step_gripper(&q, t, angles, GRIPPER_RATE_DEG.to_radians(), GRASP_THRESHOLD, dt);
            for k in 0..q.len() {
                prop_assert!((next[k] - q[k]).abs() <= bound);
            }
            q = next;
        }
    }
}

#[test]
fn agent_inputs_are_in_bounds_for_arbitrary_observations() {
    let model = RobotModel::builtin();
    let scene = generate(&builtin_templates(), &Catalog::builtin(), &DifficultyConfig::hard(), 5).unwrap();
    let base = WorldState::new(&scene, &model, 0.02);
    let mut rng = RngStream::new(3, "test/agent-fuzz");
    let cfg = AgentConfig { noise_sigma: 0.3, ..AgentConfig::default() };
    let mut plan = AgentPlan::default();
    for i in 0..3_000 {
        let mut w = base.clone();
        w.tick = rng.range_inclusive(0, 20_000) as u64;
        w.base.x = rng.uniform(w.room.min_x, w.room.max_x);
        w.base.z = rng.uniform(w.room.min_z, w.room.max_z);
        w.base.yaw = rng.uniform(-4.0, 4.0);
        for q in &mut w.q {
            *q += rng.uniform(-0.3, 0.3);
        }
        for o in &mut w.objects {
            if rng.bernoulli(0.3) {
                o.position.x = rng.uniform(w.room.min_x, w.room.max_x);
                o.position.z = rng.uniform(w.room.min_z, w.room.max_z);
            }
        }
        if rng.bernoulli(0.1) {
            plan = AgentPlan::default();
        }
        let (input, next) = policy_step(&cfg, &w, &model, &plan);
        plan = next;
        assert!(input.is_finite(), "step {i}");
        assert_eq!(input.clamped(), input, "step {i}: {input:?}");
        let mut agent = playcollect_core::agent::ScriptedAgent::new(cfg.clone(), i);
        let noisy = agent.step(&w, &model);
        assert!(noisy.is_finite() && noisy.clamped() == noisy);
    }
}

#[test]
fn resting_objects_stay_supported() {
    let model = RobotModel::builtin();
    let cfg = SimConfig::default();
    for seed in 0..10 {
        let scene = generate(&builtin_templates(), &Catalog::builtin(), &DifficultyConfig::easy(), seed).unwrap();
        let mut w = WorldState::new(&scene, &model, cfg.dt);
        let mut c = RobotController::new(model.clone(), ControlConfig::default());
        let mut rng = RngStream::new(seed, "test/support");
        let mut input = random_input(&mut rng);
        for t in 0..1_000 {
            if t % 25 == 0 {
                input = random_input(&mut rng);
            }
            let cmd = c.tick(&input, cfg.dt).unwrap();
            step(&mut w, &model, &StepCommand { chassis: cmd.chassis, joint_targets: cmd.smoothed, triggers: cmd.triggers, bob: cmd.bob }, &cfg);
            for o in w.objects.iter().filter(|o| o.attached.is_none()) {
                let base = o.base_height();
                let supported = base.abs() < 1e-9
                    || w.surfaces.iter().any(|s| (s.height - base).abs() < 1e-9 && s.rect.contains(o.position.x, o.position.z))
                    || w.goal_triggers.iter().any(|g| (g.volume.min.y - base).abs() < 1e-9 && g.volume.contains_xz(o.position.x, o.position.z));
                assert!(supported, "seed {seed} tick {t}: object {} floats at {base}", o.id);
            }
        }
    }
}
