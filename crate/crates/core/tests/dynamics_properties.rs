use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;

use gustlab::dynamics::{
    hover_duty, quaternion_from_euler, step, DroneParams, DroneState, MotorCommand,
};

const DT: f64 = 1.0 / 240.0;

fn spinning(w: Vector3<f64>) -> DroneState {
    let mut s = DroneState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    s.q = quaternion_from_euler(0.2, -0.1, 0.7);
    s.w = w;
    s
}

fn world_momentum(p: &DroneParams, s: &DroneState) -> Vector3<f64> {
    s.q * p.inertia_diag.component_mul(&s.w)
}

fn run(p: &DroneParams, mut s: DroneState, cmds: &[MotorCommand], force: &Vector3<f64>, dt: f64) -> DroneState {
    for c in cmds {
        s = step(p, &s, c, force, dt).unwrap();
    }
    s
}

#[test]
fn identical_inputs_give_bit_identical_trajectories() {
    let p = DroneParams::default();
    let cmds: Vec<MotorCommand> = (0..2000)
        .map(|i| {
            let t = i as f64 * DT;
            MotorCommand::new(Vector4::new(
                0.64 + 0.05 * (3.0 * t).sin(),
                0.63 + 0.04 * (2.0 * t).cos(),
                0.65,
                0.62 + 0.03 * (5.0 * t).sin(),
            ))
        })
        .collect();
    let force = Vector3::new(0.4, -0.2, 0.1);
    let a = run(&p, spinning(Vector3::new(0.3, 0.1, -0.2)), &cmds, &force, DT);
    let b = run(&p, spinning(Vector3::new(0.3, 0.1, -0.2)), &cmds, &force, DT);
    assert_eq!(a, b);
}

#[test]
fn quaternion_stays_unit_over_1e5_steps() {
    let p = DroneParams::default();
    let mut s = spinning(Vector3::new(2.0, -1.5, 3.0));
    s.rotor_speeds = Vector4::repeat(600.0);
    let cmd = MotorCommand::new(Vector4::new(0.7, 0.5, 0.68, 0.52));
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        s = step(&p, &s, &cmd, &Vector3::zeros(), DT).unwrap();
        worst = worst.max((s.q.quaternion().norm() - 1.0).abs());
    }
    assert!(worst < 1e-9, "norm drift {worst}");
}

#[test]
fn unpowered_step_changes_momentum_by_gravity_only() {
    let p = DroneParams::default();
    let mut s = spinning(Vector3::zeros());
    s.v = Vector3::new(1.0, -2.0, 0.5);
    let next = step(&p, &s, &MotorCommand::uniform(0.0), &Vector3::zeros(), DT).unwrap();
    let dp = p.mass * (next.v - s.v);
    let expected = -p.mass * p.gravity * DT;
    assert!(((dp.z - expected) / expected).abs() < 1e-12, "{} vs {expected}", dp.z);
    assert!(dp.x.abs() < 1e-15 && dp.y.abs() < 1e-15);
}

#[test]
fn torque_free_body_conserves_angular_momentum() {
    let p = DroneParams::default();
    for w in [
        Vector3::new(1.0, 0.5, 2.0),
        Vector3::new(-0.8, 1.2, 0.3),
        Vector3::new(0.0, 0.0, 4.0),
    ] {
        let mut s = spinning(w);
        let l0 = world_momentum(&p, &s);
        for _ in 0..1000 {
            s = step(&p, &s, &MotorCommand::uniform(0.0), &Vector3::zeros(), DT).unwrap();
        }
        let l1 = world_momentum(&p, &s);
        for i in 0..3 {
            let scale = l0.norm();
            assert!(
                ((l1[i] - l0[i]) / scale).abs() < 1e-6,
                "axis {i}: {} -> {} for w0 = {w:?}",
                l0[i],
                l1[i]
            );
        }
    }
}

#[test]
fn halving_dt_shows_second_order_convergence() {
    let p = DroneParams::default();
    let duty = hover_duty(&p).unwrap();
    let cmd_at = |t: f64| {
        MotorCommand::new(Vector4::new(
            duty + 0.08 * (4.0 * t).sin(),
            duty - 0.05 * (3.0 * t).cos(),
            duty + 0.06 * (5.0 * t).sin(),
            duty - 0.07 * (2.0 * t).sin(),
        ))
    };
    let endpoint = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut s = spinning(Vector3::new(0.5, -0.4, 0.8));
        s.rotor_speeds = Vector4::repeat(duty * p.max_rotor_speed);
        for i in 0..n {
            // hold the command over each coarse interval so every resolution
            // integrates the same piecewise-constant input
            let t = (i * 60 / n) as f64 / 60.0;
            s = step(&p, &s, &cmd_at(t), &Vector3::new(0.3, 0.0, 0.0), dt).unwrap();
        }
        s
    };
    let (a, b, c) = (endpoint(240), endpoint(480), endpoint(960));
    let e1 = (a.r - b.r).norm();
    let e2 = (b.r - c.r).norm();
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio} ({e1} / {e2})");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn motor_command_stays_in_unit_box(d in prop::array::uniform4(-5.0f64..5.0)) {
        let c = MotorCommand::new(Vector4::from(d));
        prop_assert!(c.duty().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn unpowered_fall_is_frame_independent(roll in -1.0f64..1.0, pitch in -1.0f64..1.0, yaw in -3.0f64..3.0) {
        let p = DroneParams::default();
        let mut s = DroneState::at_rest(Vector3::zeros());
        s.q = quaternion_from_euler(roll, pitch, yaw);
        let next = step(&p, &s, &MotorCommand::uniform(0.0), &Vector3::zeros(), DT).unwrap();
        prop_assert!((next.v.z + p.gravity * DT).abs() < 1e-15);
    }
}
