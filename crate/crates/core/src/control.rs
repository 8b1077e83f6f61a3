//! Cascaded multirotor controller: position -> attitude -> body rate -> mixer,
//! with the residual injection point between the attitude and rate loops.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{quaternion_from_euler, DroneParams, DroneState, MotorCommand};
use crate::error::Error;

/// Per-axis bound on the body-rate residual, rad/s.
pub const RATE_RESIDUAL_LIMIT: f64 = 0.3;
/// Bound on the collective thrust residual, N.
pub const THRUST_RESIDUAL_LIMIT: f64 = 1.0;
/// Per-axis clip applied to the attitude loop output in residual modes, rad/s.
pub const RATE_SETPOINT_CLIP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    Baseline,
    WindUnaware,
    WindAware,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 3] = [
        ControllerMode::WindAware,
        ControllerMode::WindUnaware,
        ControllerMode::Baseline,
    ];

    pub fn has_policy(self) -> bool {
        self != ControllerMode::Baseline
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Baseline => "baseline",
            ControllerMode::WindUnaware => "wind-unaware",
            ControllerMode::WindAware => "wind-aware",
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ControllerMode::Baseline),
            "wind-unaware" | "wind_unaware" => Ok(ControllerMode::WindUnaware),
            "wind-aware" | "wind_aware" => Ok(ControllerMode::WindAware),
            other => Err(Error::Usage(format!("unknown controller mode '{other}'"))),
        }
    }
}

/// Body-rate and collective-thrust corrections from the residual policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualAction {
    pub rates: Vector3<f64>,
    pub thrust: f64,
}

impl ResidualAction {
    pub const ZERO: ResidualAction = ResidualAction {
        rates: Vector3::new(0.0, 0.0, 0.0),
        thrust: 0.0,
    };

    /// Scales a normalized action in `[-1, 1]^4` to physical units. Inputs
    /// outside the cube are clamped.
    pub fn from_normalized(a: [f64; 4]) -> Self {
        let c = |x: f64| x.clamp(-1.0, 1.0);
        Self {
            rates: Vector3::new(c(a[0]), c(a[1]), c(a[2])) * RATE_RESIDUAL_LIMIT,
            thrust: c(a[3]) * THRUST_RESIDUAL_LIMIT,
        }
    }

    pub fn is_within_bounds(&self) -> bool {
        self.rates.iter().all(|r| r.abs() <= RATE_RESIDUAL_LIMIT)
            && self.thrust.abs() <= THRUST_RESIDUAL_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setpoints {
    pub r_sp: Vector3<f64>,
    /// Roll, pitch, yaw.
    pub euler_sp: Vector3<f64>,
    pub q_sp: UnitQuaternion<f64>,
    /// Attitude loop output after mode-dependent clipping.
    pub omega_sp: Vector3<f64>,
    pub thrust_sp: f64,
    pub omega_net: Vector3<f64>,
    pub thrust_net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlGains {
    /// Position proportional gain per world axis, 1/s^2.
    pub pos_kp: Vector3<f64>,
    /// Velocity damping per world axis, 1/s.
    pub pos_kd: Vector3<f64>,
    /// Tilt limit for the attitude setpoint, rad.
    pub max_tilt: f64,
    /// Attitude error to rate setpoint, 1/s.
    pub att_kp: Vector3<f64>,
    /// Rate loop gains, expressed as angular acceleration per unit error and
    /// scaled by the inertia to get torque.
    pub rate_kp: Vector3<f64>,
    pub rate_ki: Vector3<f64>,
    pub rate_kd: Vector3<f64>,
    /// Bound on the integral contribution, rad/s^2.
    pub rate_integral_limit: Vector3<f64>,
    /// Upper bound on commanded collective thrust as a fraction of the
    /// four-rotor maximum.
    pub max_thrust_fraction: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            pos_kp: Vector3::new(3.0, 3.0, 4.0),
            pos_kd: Vector3::new(3.0, 3.0, 3.5),
            max_tilt: 0.5,
            att_kp: Vector3::new(5.0, 5.0, 2.5),
            rate_kp: Vector3::new(12.0, 12.0, 8.0),
            rate_ki: Vector3::new(4.0, 4.0, 2.0),
            rate_kd: Vector3::new(0.0, 0.0, 0.0),
            rate_integral_limit: Vector3::new(3.0, 3.0, 2.0),
            max_thrust_fraction: 0.9,
        }
    }
}

impl ControlGains {
    pub fn max_thrust(&self, params: &DroneParams) -> f64 {
        self.max_thrust_fraction * params.max_total_thrust()
    }
}

/// PD position loop with gravity feed-forward. Returns the attitude
/// setpoint and the collective thrust projected on the current body z axis.
pub fn position_controller(
    params: &DroneParams,
    gains: &ControlGains,
    state: &DroneState,
    r_sp: &Vector3<f64>,
    v_sp: &Vector3<f64>,
    yaw_sp: f64,
) -> (UnitQuaternion<f64>, f64) {
    let g = params.gravity;
    let mut acc = gains.pos_kp.component_mul(&(r_sp - state.r))
        + gains.pos_kd.component_mul(&(v_sp - state.v));
    acc.z = acc.z.max(-0.8 * g);
    let max_horizontal = (acc.z + g) * gains.max_tilt.tan();
    let horizontal = acc.xy().norm();
    if horizontal > max_horizontal {
        let s = max_horizontal / horizontal;
        acc.x *= s;
        acc.y *= s;
    }
    let desired = acc + Vector3::new(0.0, 0.0, g);

    let z_b = desired.normalize();
    let heading = Vector3::new(yaw_sp.cos(), yaw_sp.sin(), 0.0);
    let y_b = z_b.cross(&heading).normalize();
    let x_b = y_b.cross(&z_b);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x_b, y_b, z_b]));
    let q_sp = UnitQuaternion::from_rotation_matrix(&rot);

    let body_z = state.q * Vector3::z();
    let thrust = (params.mass * desired.dot(&body_z)).clamp(0.0, gains.max_thrust(params));
    (q_sp, thrust)
}

/// Quaternion-error proportional law, shortest rotation.
pub fn attitude_controller(
    gains: &ControlGains,
    state: &DroneState,
    q_sp: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    let q_err = state.q.inverse() * q_sp;
    let sign = if q_err.w < 0.0 { -1.0 } else { 1.0 };
    2.0 * sign * gains.att_kp.component_mul(&q_err.imag())
}

pub fn clip_rate_setpoint(omega_sp: &Vector3<f64>, mode: ControllerMode) -> Vector3<f64> {
    match mode {
        ControllerMode::Baseline => *omega_sp,
        _ => omega_sp.map(|w| w.clamp(-RATE_SETPOINT_CLIP, RATE_SETPOINT_CLIP)),
    }
}

/// Adds the residual to the rate and thrust setpoints; the thrust sum is
/// clamped to `[0, thrust_max]`.
pub fn combine_residual(
    omega_sp: &Vector3<f64>,
    thrust_sp: f64,
    res: &ResidualAction,
    thrust_max: f64,
) -> (Vector3<f64>, f64) {
    (
        omega_sp + res.rates,
        (thrust_sp + res.thrust).clamp(0.0, thrust_max),
    )
}

/// Body-rate PID with a clamped integrator. Runs at the physics rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateController {
    integral: Vector3<f64>,
    last_rate: Option<Vector3<f64>>,
}

impl Default for RateController {
    fn default() -> Self {
        Self::new()
    }
}

impl RateController {
    pub fn new() -> Self {
        Self {
            integral: Vector3::zeros(),
            last_rate: None,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new();
    }

    /// Integral contribution, rad/s^2.
    pub fn integral(&self) -> Vector3<f64> {
        self.integral
    }

    pub fn update(
        &mut self,
        params: &DroneParams,
        gains: &ControlGains,
        state: &DroneState,
        omega_net: &Vector3<f64>,
        thrust_net: f64,
        dt: f64,
    ) -> Vector3<f64> {
        let err = omega_net - state.w;
        self.integral += gains.rate_ki.component_mul(&err) * dt;
        self.integral = self
            .integral
            .zip_map(&gains.rate_integral_limit, |i, lim| i.clamp(-lim, lim));
        let rate_derivative = match self.last_rate {
            Some(prev) => (state.w - prev) / dt,
            None => Vector3::zeros(),
        };
        self.last_rate = Some(state.w);
        let acc = gains.rate_kp.component_mul(&err) + self.integral
            - gains.rate_kd.component_mul(&rate_derivative);
        let torque = params.inertia_diag.component_mul(&acc);
        let limit = torque_limits(params, thrust_net);
        torque.zip_map(&limit, |t, l| t.clamp(-l, l))
    }
}

/// Per-axis torque that the rotors can produce around the given collective
/// thrust without any rotor leaving `[0, max]`.
pub fn torque_limits(params: &DroneParams, thrust: f64) -> Vector3<f64> {
    let base = (thrust / 4.0).clamp(0.0, params.max_rotor_thrust());
    let headroom = base.min(params.max_rotor_thrust() - base);
    let d = params.rotor_offset();
    Vector3::new(
        4.0 * d * headroom,
        4.0 * d * headroom,
        4.0 * params.yaw_moment_ratio() * headroom,
    )
}

/// Per-rotor thrusts for a collective thrust and body torque, X layout.
pub fn allocate(params: &DroneParams, thrust: f64, torque: &Vector3<f64>) -> Vector4<f64> {
    let d2 = params.rotor_offset().powi(2);
    let c = params.yaw_moment_ratio();
    let layout = params.rotor_layout();
    Vector4::from_fn(|i, _| {
        let (x, y, spin) = layout[i];
        thrust / 4.0 + (y * torque.x - x * torque.y) / (4.0 * d2) + spin * torque.z / (4.0 * c)
    })
}

/// Allocates thrust and torque to rotors and converts to duty. When the
/// request is infeasible, collective thrust is kept, then roll/pitch torque
/// is scaled down, then yaw torque.
pub fn mixer(params: &DroneParams, thrust: f64, torque: &Vector3<f64>) -> MotorCommand {
    let f_max = params.max_rotor_thrust();
    let thrust = thrust.clamp(0.0, 4.0 * f_max);
    let base = Vector4::repeat(thrust / 4.0);
    let roll_pitch = allocate(params, 0.0, &Vector3::new(torque.x, torque.y, 0.0));
    let yaw = allocate(params, 0.0, &Vector3::new(0.0, 0.0, torque.z));

    let k_rp = feasible_scale(&base, &roll_pitch, f_max);
    let with_rp = base + roll_pitch * k_rp;
    let k_yaw = feasible_scale(&with_rp, &yaw, f_max);
    let forces = with_rp + yaw * k_yaw;

    let duty = forces.map(|f| (f.max(0.0) / params.thrust_coeff).sqrt() / params.max_rotor_speed);
    MotorCommand::new(duty)
}

/// Largest `k` in `[0, 1]` with `base + k * delta` inside `[0, f_max]`.
fn feasible_scale(base: &Vector4<f64>, delta: &Vector4<f64>, f_max: f64) -> f64 {
    let mut k: f64 = 1.0;
    for (b, d) in base.iter().zip(delta.iter()) {
        if *d > 0.0 && b + d > f_max {
            k = k.min(((f_max - b) / d).max(0.0));
        } else if *d < 0.0 && b + d < 0.0 {
            k = k.min((b / -d).max(0.0));
        }
    }
    k
}

/// Position -> attitude -> rate cascade for one vehicle.
#[derive(Debug, Clone)]
pub struct CascadeController {
    pub params: DroneParams,
    pub gains: ControlGains,
    pub mode: ControllerMode,
    pub rate: RateController,
}

impl CascadeController {
    pub fn new(params: DroneParams, gains: ControlGains, mode: ControllerMode) -> Self {
        Self {
            params,
            gains,
            mode,
            rate: RateController::new(),
        }
    }

    pub fn reset(&mut self) {
        self.rate.reset();
    }

    /// Outer loops, run at the control rate.
    pub fn setpoints(
        &self,
        state: &DroneState,
        r_sp: &Vector3<f64>,
        v_sp: &Vector3<f64>,
        euler_sp: &Vector3<f64>,
        residual: &ResidualAction,
    ) -> Setpoints {
        let (q_sp, thrust_sp) =
            position_controller(&self.params, &self.gains, state, r_sp, v_sp, euler_sp.z);
        let omega_raw = attitude_controller(&self.gains, state, &q_sp);
        let omega_sp = clip_rate_setpoint(&omega_raw, self.mode);
        let (omega_net, thrust_net) = combine_residual(
            &omega_sp,
            thrust_sp,
            residual,
            self.gains.max_thrust(&self.params),
        );
        Setpoints {
            r_sp: *r_sp,
            euler_sp: *euler_sp,
            q_sp,
            omega_sp,
            thrust_sp,
            omega_net,
            thrust_net,
        }
    }

    /// Inner loop and mixing, run at the physics rate.
    pub fn motor_command(&mut self, state: &DroneState, sp: &Setpoints, dt: f64) -> MotorCommand {
        let torque = self.rate.update(
            &self.params,
            &self.gains,
            state,
            &sp.omega_net,
            sp.thrust_net,
            dt,
        );
        mixer(&self.params, sp.thrust_net, &torque)
    }
}

/// Attitude setpoint from Euler angles; exposed for scenario setup.
pub fn attitude_setpoint(euler: &Vector3<f64>) -> UnitQuaternion<f64> {
    quaternion_from_euler(euler.x, euler.y, euler.z)
}
