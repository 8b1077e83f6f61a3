//! Rigid-body quadrotor model.
//!
//! Frames: world is East-North-Up, body is Forward-Left-Up. The airframe is
//! an X configuration; rotor order follows the usual quad-X numbering:
//! front-right, back-left, front-left, back-right. The first two spin
//! counter-clockwise seen from above, the other two clockwise.

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the vehicle. All SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroneParams {
    pub mass: f64,
    pub inertia_diag: Vector3<f64>,
    pub arm_length: f64,
    /// N per (rad/s)^2.
    pub thrust_coeff: f64,
    /// N*m per (rad/s)^2.
    pub torque_coeff: f64,
    pub motor_time_constant: f64,
    pub max_rotor_speed: f64,
    pub gravity: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            mass: 2.0,
            inertia_diag: Vector3::new(0.022, 0.022, 0.035),
            arm_length: 0.25,
            thrust_coeff: 1.0e-5,
            torque_coeff: 1.6e-7,
            motor_time_constant: 0.05,
            max_rotor_speed: 1100.0,
            gravity: 9.81,
        }
    }
}

impl DroneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia_diag.x", self.inertia_diag.x),
            ("inertia_diag.y", self.inertia_diag.y),
            ("inertia_diag.z", self.inertia_diag.z),
            ("arm_length", self.arm_length),
            ("thrust_coeff", self.thrust_coeff),
            ("torque_coeff", self.torque_coeff),
            ("motor_time_constant", self.motor_time_constant),
            ("max_rotor_speed", self.max_rotor_speed),
            ("gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NotFlyable(format!("{name} = {value} must be > 0")));
            }
        }
        let weight = self.mass * self.gravity;
        if self.max_total_thrust() <= 1.5 * weight {
            return Err(Error::NotFlyable(format!(
                "max thrust {:.3} N does not exceed 1.5 x weight ({:.3} N)",
                self.max_total_thrust(),
                1.5 * weight
            )));
        }
        Ok(())
    }

    pub fn max_rotor_thrust(&self) -> f64 {
        self.thrust_coeff * self.max_rotor_speed * self.max_rotor_speed
    }

    pub fn max_total_thrust(&self) -> f64 {
        4.0 * self.max_rotor_thrust()
    }

    /// Moment arm of each rotor about the roll and pitch axes.
    pub fn rotor_offset(&self) -> f64 {
        self.arm_length * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Yaw reaction torque per newton of rotor thrust.
    pub fn yaw_moment_ratio(&self) -> f64 {
        self.torque_coeff / self.thrust_coeff
    }

    /// Body-frame (x, y) rotor positions and yaw reaction signs.
    pub fn rotor_layout(&self) -> [(f64, f64, f64); 4] {
        let d = self.rotor_offset();
        [(d, -d, -1.0), (-d, d, -1.0), (d, d, 1.0), (-d, -d, 1.0)]
    }

    /// Collective thrust and body torques produced by the given rotor speeds.
    pub fn rotor_wrench(&self, rotor_speeds: &Vector4<f64>) -> (f64, Vector3<f64>) {
        let mut thrust = 0.0;
        let mut torque = Vector3::zeros();
        for ((x, y, spin), &speed) in self.rotor_layout().iter().zip(rotor_speeds.iter()) {
            let f = self.thrust_coeff * speed * speed;
            thrust += f;
            torque.x += y * f;
            torque.y -= x * f;
            torque.z += spin * self.torque_coeff * speed * speed;
        }
        (thrust, torque)
    }
}

/// Duty that holds the vehicle in hover with all four rotors at steady state.
pub fn hover_duty(params: &DroneParams) -> Result<f64> {
    params.validate()?;
    let per_rotor = params.mass * params.gravity / 4.0;
    Ok((per_rotor / params.thrust_coeff).sqrt() / params.max_rotor_speed)
}

/// Normalized duty per rotor. The rotor speed target is `duty * max_rotor_speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorCommand(Vector4<f64>);

impl MotorCommand {
    pub fn new(duty: Vector4<f64>) -> Self {
        Self(duty.map(|d| if d.is_nan() { d } else { d.clamp(0.0, 1.0) }))
    }

    pub fn uniform(duty: f64) -> Self {
        Self::new(Vector4::repeat(duty))
    }

    pub fn duty(&self) -> &Vector4<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub r: Vector3<f64>,
    /// Body to world.
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    /// Body-frame angular velocity.
    pub w: Vector3<f64>,
    pub rotor_speeds: Vector4<f64>,
    pub t: f64,
}

impl DroneState {
    pub fn at_rest(r: Vector3<f64>) -> Self {
        Self {
            r,
            q: UnitQuaternion::identity(),
            v: Vector3::zeros(),
            w: Vector3::zeros(),
            rotor_speeds: Vector4::zeros(),
            t: 0.0,
        }
    }

    /// At rest with rotors spinning at hover speed.
    pub fn hovering(params: &DroneParams, r: Vector3<f64>) -> Result<Self> {
        let speed = hover_duty(params)? * params.max_rotor_speed;
        Ok(Self {
            rotor_speeds: Vector4::repeat(speed),
            ..Self::at_rest(r)
        })
    }

    pub fn euler(&self) -> EulerAngles {
        euler_angles(&self.q)
    }

    /// Angular velocity expressed in the world frame.
    pub fn world_rates(&self) -> Vector3<f64> {
        self.q * self.w
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
            && self.rotor_speeds.iter().all(|x| x.is_finite())
            && self.t.is_finite()
    }
}

/// Roll, pitch, yaw in the Z-Y-X convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Pitch is within 1e-6 rad of +-pi/2; roll and yaw are not separable there.
    pub gimbal_lock: bool,
}

impl EulerAngles {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }
}

fn half_open_angle(a: f64) -> f64 {
    // atan2 may return exactly -pi; the convention here is (-pi, pi].
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

pub fn euler_angles(q: &UnitQuaternion<f64>) -> EulerAngles {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let sin_pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    EulerAngles {
        roll: half_open_angle(roll),
        pitch,
        yaw: half_open_angle(yaw),
        gimbal_lock: (std::f64::consts::FRAC_PI_2 - pitch.abs()) < 1e-6,
    }
}

pub fn quaternion_from_euler(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    let (sr, cr) = (0.5 * roll).sin_cos();
    let (sp, cp) = (0.5 * pitch).sin_cos();
    let (sy, cy) = (0.5 * yaw).sin_cos();
    UnitQuaternion::from_quaternion(Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ))
}

/// Body-frame rotation increment `exp(rotation_vector / 2)`.
fn rotate_body(q: &UnitQuaternion<f64>, rotation_vector: Vector3<f64>) -> UnitQuaternion<f64> {
    let delta = UnitQuaternion::from_scaled_axis(rotation_vector);
    UnitQuaternion::new_normalize(*(q * delta).quaternion())
}

struct Rates {
    acc: Vector3<f64>,
    ang_acc: Vector3<f64>,
    rotor_acc: Vector4<f64>,
}

fn rates(
    params: &DroneParams,
    q: &UnitQuaternion<f64>,
    w: &Vector3<f64>,
    rotor_speeds: &Vector4<f64>,
    rotor_target: &Vector4<f64>,
    external_force: &Vector3<f64>,
) -> Rates {
    let (thrust, torque) = params.rotor_wrench(rotor_speeds);
    let thrust_world = q * Vector3::new(0.0, 0.0, thrust);
    let acc = (thrust_world + external_force) / params.mass - Vector3::new(0.0, 0.0, params.gravity);
    let inertia = params.inertia_diag;
    let momentum = inertia.component_mul(w);
    let ang_acc = (torque - w.cross(&momentum)).component_div(&inertia);
    let rotor_acc = (rotor_target - rotor_speeds) / params.motor_time_constant;
    Rates {
        acc,
        ang_acc,
        rotor_acc,
    }
}

/// Advances the state by `dt` with an explicit midpoint scheme. Attitude is
/// propagated on the unit sphere with the exponential map and renormalized.
pub fn step(
    params: &DroneParams,
    state: &DroneState,
    cmd: &MotorCommand,
    external_force: &Vector3<f64>,
    dt: f64,
) -> Result<DroneState> {
    let fault = |reason: &str| Error::SimulationFault {
        t: state.t,
        reason: reason.to_string(),
    };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(fault("dt must be finite and positive"));
    }
    if !state.is_finite() {
        return Err(fault("non-finite state"));
    }
    if !cmd.duty().iter().all(|d| d.is_finite()) {
        return Err(fault("non-finite motor command"));
    }
    if !external_force.iter().all(|f| f.is_finite()) {
        return Err(fault("non-finite external force"));
    }

    let target = cmd.duty() * params.max_rotor_speed;
    let h = 0.5 * dt;

    let k1 = rates(params, &state.q, &state.w, &state.rotor_speeds, &target, external_force);
    let v_mid = state.v + k1.acc * h;
    let w_mid = state.w + k1.ang_acc * h;
    let q_mid = rotate_body(&state.q, state.w * h);
    let rotor_mid = state.rotor_speeds + k1.rotor_acc * h;

    let k2 = rates(params, &q_mid, &w_mid, &rotor_mid, &target, external_force);
    // angular momentum is advanced in the world frame, where only the rotor
    // torque changes it, and the body rates are recovered at the new attitude
    let inertia = params.inertia_diag;
    let (_, torque_mid) = params.rotor_wrench(&rotor_mid);
    let momentum = state.q * inertia.component_mul(&state.w) + q_mid * torque_mid * dt;
    let q_next = rotate_body(&state.q, w_mid * dt);
    let next = DroneState {
        r: state.r + v_mid * dt,
        q: q_next,
        v: state.v + k2.acc * dt,
        w: q_next.inverse_transform_vector(&momentum).component_div(&inertia),
        rotor_speeds: (state.rotor_speeds + k2.rotor_acc * dt)
            .map(|s| s.clamp(0.0, params.max_rotor_speed)),
        t: state.t + dt,
    };
    if !next.is_finite() {
        return Err(Error::SimulationFault {
            t: next.t,
            reason: "state diverged".into(),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn hover_stays_at_rest() {
        let p = DroneParams::default();
        let s = DroneState::hovering(&p, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let cmd = MotorCommand::uniform(hover_duty(&p).unwrap());
        let next = step(&p, &s, &cmd, &Vector3::zeros(), 1.0 / 240.0).unwrap();
        assert!(next.v.norm() < 1e-6);
    }

    #[test]
    fn free_fall_one_step() {
        let p = DroneParams::default();
        let s = DroneState::at_rest(Vector3::zeros());
        let next = step(&p, &s, &MotorCommand::uniform(0.0), &Vector3::zeros(), 0.01).unwrap();
        assert_relative_eq!(next.v.z, -0.0981, epsilon = 1e-15);
        assert_eq!(next.v.x, 0.0);
        assert_eq!(next.v.y, 0.0);
    }

    #[test]
    fn left_side_thrust_rolls_right() {
        // Rotors 1 and 2 sit on the left (+y) side.
        let p = DroneParams::default();
        let mut s = DroneState::at_rest(Vector3::zeros());
        let (lo, hi) = (500.0, 600.0);
        s.rotor_speeds = Vector4::new(lo, hi, hi, lo);
        let cmd = MotorCommand::new(s.rotor_speeds / p.max_rotor_speed);
        let dt = 1e-4;
        let next = step(&p, &s, &cmd, &Vector3::zeros(), dt).unwrap();

        let d = p.arm_length / 2f64.sqrt();
        let df = p.thrust_coeff * (hi * hi - lo * lo);
        let expected_alpha = 2.0 * d * df / p.inertia_diag.x;
        let alpha = next.w / dt;
        assert_relative_eq!(alpha.x, expected_alpha, max_relative = 1e-9);
        assert!(alpha.y.abs() < 1e-9 && alpha.z.abs() < 1e-9);
    }

    #[test]
    fn back_thrust_pitches_nose_down() {
        let p = DroneParams::default();
        let mut s = DroneState::at_rest(Vector3::zeros());
        let (lo, hi) = (500.0, 600.0);
        // back-left, back-right high
        s.rotor_speeds = Vector4::new(lo, hi, lo, hi);
        let cmd = MotorCommand::new(s.rotor_speeds / p.max_rotor_speed);
        let dt = 1e-4;
        let next = step(&p, &s, &cmd, &Vector3::zeros(), dt).unwrap();
        let d = p.arm_length / 2f64.sqrt();
        let expected = 2.0 * d * p.thrust_coeff * (hi * hi - lo * lo) / p.inertia_diag.y;
        assert_relative_eq!(next.w.y / dt, expected, max_relative = 1e-9);
    }

    #[test]
    fn clockwise_rotors_yaw_left() {
        let p = DroneParams::default();
        let mut s = DroneState::at_rest(Vector3::zeros());
        s.rotor_speeds = Vector4::new(500.0, 500.0, 600.0, 600.0);
        let cmd = MotorCommand::new(s.rotor_speeds / p.max_rotor_speed);
        let next = step(&p, &s, &cmd, &Vector3::zeros(), 1e-4).unwrap();
        assert!(next.w.z > 0.0);
    }

    #[test]
    fn non_finite_inputs_fault() {
        let p = DroneParams::default();
        let s = DroneState::at_rest(Vector3::zeros());
        let bad_force = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            step(&p, &s, &MotorCommand::uniform(0.5), &bad_force, 0.01),
            Err(Error::SimulationFault { .. })
        ));
        let mut bad = s.clone();
        bad.v.x = f64::INFINITY;
        assert!(step(&p, &bad, &MotorCommand::uniform(0.5), &Vector3::zeros(), 0.01).is_err());
        assert!(step(&p, &s, &MotorCommand::uniform(0.5), &Vector3::zeros(), 0.0).is_err());
    }

    #[test]
    fn motor_command_is_clamped() {
        let c = MotorCommand::new(Vector4::new(-0.5, 0.3, 1.7, 1.0));
        assert_eq!(*c.duty(), Vector4::new(0.0, 0.3, 1.0, 1.0));
    }

    #[test]
    fn euler_special_cases() {
        let e = euler_angles(&UnitQuaternion::identity());
        assert_eq!((e.roll, e.pitch, e.yaw), (0.0, 0.0, 0.0));
        let yaw90 = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let e = euler_angles(&yaw90);
        assert!(e.roll.abs() < 1e-15 && e.pitch.abs() < 1e-15);
        assert_relative_eq!(e.yaw, FRAC_PI_2, epsilon = 1e-15);
        let yaw180 = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -PI);
        assert!(euler_angles(&yaw180).yaw > 0.0);
        let locked = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2);
        assert!(euler_angles(&locked).gimbal_lock);
    }

    #[test]
    fn own_quaternion_matches_nalgebra() {
        let q = quaternion_from_euler(0.3, -0.2, 1.1);
        let r = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        assert!(q.angle_to(&r) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn euler_round_trip(
            roll in -PI + 1e-3..PI,
            pitch in -FRAC_PI_2 + 1e-3..FRAC_PI_2 - 1e-3,
            yaw in -PI + 1e-3..PI,
        ) {
            let q = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
            let e = euler_angles(&q);
            prop_assert!((e.roll - roll).abs() < 1e-9);
            prop_assert!((e.pitch - pitch).abs() < 1e-9);
            prop_assert!((e.yaw - yaw).abs() < 1e-9);
            prop_assert!(!e.gimbal_lock);
        }
    }

    #[test]
    fn hover_duty_inverts_thrust() {
        let p = DroneParams::default();
        let duty = hover_duty(&p).unwrap();
        let speed = duty * p.max_rotor_speed;
        assert_relative_eq!(4.0 * p.thrust_coeff * speed * speed, 19.62, max_relative = 1e-12);
    }

    #[test]
    fn hover_duty_vanishes_with_mass() {
        let mut p = DroneParams::default();
        let mut last = f64::INFINITY;
        for m in [1.0, 1e-2, 1e-4, 1e-8] {
            p.mass = m;
            let d = hover_duty(&p).unwrap();
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn unflyable_params_rejected() {
        let p = DroneParams {
            mass: 10.0,
            ..DroneParams::default()
        };
        assert!(matches!(hover_duty(&p), Err(Error::NotFlyable(_))));
        let p = DroneParams {
            arm_length: 0.0,
            ..DroneParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn open_loop_hover_holds_altitude() {
        let p = DroneParams::default();
        let mut s = DroneState::hovering(&p, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let cmd = MotorCommand::uniform(hover_duty(&p).unwrap());
        for _ in 0..(5 * 240) {
            s = step(&p, &s, &cmd, &Vector3::zeros(), 1.0 / 240.0).unwrap();
        }
        assert!((s.r.z - 1.0).abs() < 0.01);
    }
}
