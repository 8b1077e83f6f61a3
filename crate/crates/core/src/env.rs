//! Closed-loop hover task: cascade controller plus residual action, gust
//! wind with drag, and the wind sensing pipeline.
//!
//! One call to [`GustEnv::step`] is one control period. The outer loops and
//! the policy run once per period, the rate loop, mixer, sensor and rigid
//! body run `physics_substeps` times.

use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{CascadeController, ControlGains, ControllerMode, ResidualAction, Setpoints};
use crate::dynamics::{quaternion_from_euler, step, DroneParams, DroneState, MotorCommand};
use crate::error::{Error, Result};
use crate::mast::{InverseModels, MastConfig, WindEstimate, WindSensor};
use crate::policy::Observation;
use crate::rng::SimRng;
use crate::wind::{drag_force, wind_at, DragParams, GustProfile, WindSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub drone: DroneParams,
    pub drag: DragParams,
    pub gains: ControlGains,
    pub control_hz: f64,
    pub physics_substeps: usize,
    /// Episode length in control steps.
    pub episode_steps: usize,
    /// Half-widths of the uniform initial-state ranges.
    pub init_position: f64,
    pub init_roll_pitch: f64,
    pub init_yaw: f64,
    pub setpoint: [f64; 3],
    /// Early termination bounds; `terminate_early = false` disables them.
    pub terminate_early: bool,
    pub max_position_error: f64,
    pub max_tilt: f64,
    pub terminal_reward: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            drone: DroneParams::default(),
            drag: DragParams::default(),
            gains: ControlGains::default(),
            control_hz: 40.0,
            physics_substeps: 6,
            episode_steps: 400,
            init_position: 0.3,
            init_roll_pitch: 0.1,
            init_yaw: 0.3,
            setpoint: [0.0, 0.0, 1.0],
            terminate_early: true,
            max_position_error: 2.0,
            max_tilt: 1.0,
            terminal_reward: -10.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.drone.validate()?;
        self.drag.validate()?;
        let ok = self.control_hz > 0.0
            && self.physics_substeps > 0
            && self.episode_steps > 0
            && self.init_position >= 0.0
            && self.init_roll_pitch >= 0.0
            && self.init_yaw >= 0.0
            && self.max_position_error > 0.0
            && self.max_tilt > 0.0
            && self.setpoint.iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid environment settings {self:?}")))
        }
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn physics_dt(&self) -> f64 {
        self.control_dt() / self.physics_substeps as f64
    }

    pub fn setpoint(&self) -> Vector3<f64> {
        Vector3::from(self.setpoint)
    }
}

/// How each environment instance gets its wind sensor.
#[derive(Debug, Clone, Default)]
pub enum SensorSetup {
    #[default]
    Ideal,
    Emulated {
        config: MastConfig,
        models: Arc<InverseModels>,
    },
}

impl SensorSetup {
    pub fn build(&self) -> WindSensor {
        match self {
            SensorSetup::Ideal => WindSensor::ideal(),
            SensorSetup::Emulated { config, models } => {
                WindSensor::emulated(config.clone(), Arc::clone(models))
            }
        }
    }
}

/// Hover at the setpoint plus uniform offsets in position, roll/pitch and yaw.
pub fn sample_initial_state(cfg: &EnvConfig, rng: &mut SimRng) -> Result<DroneState> {
    let mut u = |h: f64| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
    let offset = Vector3::new(u(cfg.init_position), u(cfg.init_position), u(cfg.init_position));
    let (roll, pitch, yaw) = (u(cfg.init_roll_pitch), u(cfg.init_roll_pitch), u(cfg.init_yaw));
    let mut state = DroneState::hovering(&cfg.drone, cfg.setpoint() + offset)?;
    state.q = quaternion_from_euler(roll, pitch, yaw);
    Ok(state)
}

/// Everything logged for one control step, taken at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: DroneState,
    pub setpoints: Setpoints,
    pub wind: WindSample,
    pub estimate: WindEstimate,
    pub filtered_wind: f64,
    pub residual: ResidualAction,
    /// Last command sent to the motors during the step.
    pub command: MotorCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct GustEnv {
    cfg: EnvConfig,
    mode: ControllerMode,
    controller: CascadeController,
    sensor: WindSensor,
    profile: GustProfile,
    state: DroneState,
    steps: usize,
    noise: SimRng,
}

impl GustEnv {
    pub fn new(cfg: EnvConfig, mode: ControllerMode, sensor: WindSensor) -> Result<Self> {
        cfg.validate()?;
        let state = DroneState::hovering(&cfg.drone, cfg.setpoint())?;
        Ok(Self {
            controller: CascadeController::new(cfg.drone.clone(), cfg.gains.clone(), mode),
            cfg,
            mode,
            sensor,
            profile: GustProfile::calm(),
            state,
            steps: 0,
            noise: crate::rng::stream_rng(0, crate::rng::Stream::SensorNoise, 0),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn state(&self) -> &DroneState {
        &self.state
    }

    pub fn profile(&self) -> &GustProfile {
        &self.profile
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Starts an episode. `noise` drives the sensor noise only.
    pub fn reset(
        &mut self,
        state: DroneState,
        profile: GustProfile,
        noise: SimRng,
    ) -> Result<Observation> {
        if profile.u_low != 0.0 || profile.u_high != 0.0 {
            profile.validate()?;
        }
        self.state = DroneState { t: 0.0, ..state };
        self.profile = profile;
        self.noise = noise;
        self.steps = 0;
        self.controller.reset();
        self.sensor.reset();
        let wind = wind_at(&self.profile, 0.0);
        self.sensor
            .sample(&wind, &self.state, self.cfg.physics_dt(), &mut self.noise)?;
        self.sensor.push_history();
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        Observation::build(
            &self.state,
            &self.cfg.setpoint(),
            &self.sensor.history(),
            self.mode,
        )
    }

    pub fn step(&mut self, residual: &ResidualAction) -> Result<(Transition, StepRecord)> {
        let residual = if self.mode.has_policy() {
            *residual
        } else {
            ResidualAction::ZERO
        };
        let r_sp = self.cfg.setpoint();
        let setpoints =
            self.controller
                .setpoints(&self.state, &r_sp, &Vector3::zeros(), &Vector3::zeros(), &residual);
        let start_state = self.state.clone();
        let start_wind = wind_at(&self.profile, start_state.t);
        let start_estimate = self.sensor.last_estimate().expect("sensor sampled at reset");
        let start_filtered = self.sensor.filtered_x();

        let dt = self.cfg.physics_dt();
        let t0 = self.steps as f64 * self.cfg.control_dt();
        let mut command = MotorCommand::uniform(0.0);
        for k in 0..self.cfg.physics_substeps {
            // fixed grid so time stays exact across long episodes
            let t = t0 + k as f64 * dt;
            self.state.t = t;
            let wind = wind_at(&self.profile, t);
            if k > 0 {
                self.sensor.sample(&wind, &self.state, dt, &mut self.noise)?;
            }
            let force = drag_force(&self.cfg.drag, &wind, &self.state);
            command = self.controller.motor_command(&self.state, &setpoints, dt);
            self.state = step(&self.cfg.drone, &self.state, &command, &force, dt)?;
        }
        self.steps += 1;
        self.state.t = self.steps as f64 * self.cfg.control_dt();
        let wind = wind_at(&self.profile, self.state.t);
        self.sensor.sample(&wind, &self.state, dt, &mut self.noise)?;
        self.sensor.push_history();

        let error = (self.state.r - r_sp).norm();
        let euler = self.state.euler();
        let out_of_bounds = error > self.cfg.max_position_error
            || euler.roll.abs() > self.cfg.max_tilt
            || euler.pitch.abs() > self.cfg.max_tilt;
        let terminated = self.cfg.terminate_early && out_of_bounds;
        let transition = Transition {
            obs: self.observation(),
            reward: if terminated {
                self.cfg.terminal_reward
            } else {
                reward(&self.state.r, &r_sp)
            },
            terminated,
            truncated: !terminated && self.steps >= self.cfg.episode_steps,
        };
        let record = StepRecord {
            t: start_state.t,
            state: start_state,
            setpoints,
            wind: start_wind,
            estimate: start_estimate,
            filtered_wind: start_filtered,
            residual,
            command,
        };
        Ok((transition, record))
    }
}

/// Negative distance to the setpoint.
pub fn reward(r: &Vector3<f64>, r_sp: &Vector3<f64>) -> f64 {
    -(r - r_sp).norm()
}
