//! Evaluation scenarios, traces and the controller comparison.
//!
//! Trace CSV columns, in order:
//!
//! ```text
//! t                                   s, start of the control step
//! x y z  vx vy vz                     world position and velocity
//! roll pitch yaw  p q r               ZYX Euler angles, body rates
//! x_sp y_sp z_sp
//! omega_sp_x omega_sp_y omega_sp_z thrust_sp      attitude loop output
//! omega_net_x omega_net_y omega_net_z thrust_net  after the residual
//! wind_x wind_y wind_z                true wind
//! est_speed est_direction             raw sensor estimate
//! filtered_wind_x                     rolling max seen by the policy
//! res_p res_q res_r res_thrust        residual action
//! duty_1 duty_2 duty_3 duty_4         last motor command of the step
//! ```

mod compare;
mod metrics;
mod svg;
mod validation;

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use compare::{
    compare_controllers, write_mean_trajectory_csv, write_table_csv, write_trials_csv,
    Checkpoints, Comparison, TrialResult,
};
pub use metrics::{axis_metrics, compute_metrics, mean_std, AxisMetrics, MetricsReport, Stat};
pub use svg::write_svg_figures;
pub use validation::{
    relative_wind_validation, rolling_average, validation_calibration, write_validation_csv,
    RelativeWindProfile, RelativeWindSeries,
};

use crate::control::ControllerMode;
use crate::dynamics::DroneState;
use crate::env::{sample_initial_state, EnvConfig, GustEnv, SensorSetup, StepRecord};
use crate::error::{Error, Result};
use crate::policy::{policy_forward, Actor};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::wind::{sample_gust_profile, GustProfile, GustRanges};

/// Hardware-timeline defaults.
pub const HARDWARE_DURATION: f64 = 30.0;
pub const HARDWARE_GUST_ONSET: f64 = 12.0;

/// Evaluation trial `k` uses index `HELD_OUT_OFFSET + k` of the evaluation
/// stream, so it never coincides with the episodes scored during training.
pub const HELD_OUT_OFFSET: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One episode drawn exactly like a training episode.
    TrainingEpisode,
    /// Hover from rest; zero wind until the onset, then a gust that stays
    /// high until the end.
    HardwareTimeline,
    RelativeWindValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GustSchedule {
    /// Drawn from the gust ranges with the trial's gust stream.
    Sampled,
    Calm,
    Fixed(GustProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// s
    pub duration: f64,
    /// s, hardware timeline only.
    pub gust_onset: f64,
    pub gust: GustSchedule,
    pub mode: ControllerMode,
    pub seed: u64,
    pub trial: u64,
}

impl ScenarioSpec {
    pub fn hardware_timeline(mode: ControllerMode, seed: u64, trial: u64) -> Self {
        Self {
            kind: ScenarioKind::HardwareTimeline,
            duration: HARDWARE_DURATION,
            gust_onset: HARDWARE_GUST_ONSET,
            gust: GustSchedule::Sampled,
            mode,
            seed,
            trial,
        }
    }

    pub fn training_episode(mode: ControllerMode, seed: u64, episode: u64, cfg: &EnvConfig) -> Self {
        Self {
            kind: ScenarioKind::TrainingEpisode,
            duration: cfg.episode_steps as f64 / cfg.control_hz,
            gust_onset: 0.0,
            gust: GustSchedule::Sampled,
            mode,
            seed,
            trial: episode,
        }
    }

    pub fn with_gust(mut self, gust: GustSchedule) -> Self {
        self.gust = gust;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config(format!("scenario duration {} must be positive", self.duration)));
        }
        if self.kind == ScenarioKind::HardwareTimeline
            && !(self.gust_onset >= 0.0 && self.gust_onset < self.duration)
        {
            return Err(Error::Config(format!(
                "gust onset {} s is outside the {} s timeline",
                self.gust_onset, self.duration
            )));
        }
        Ok(())
    }

    /// Root of the per-trial streams. Depends on the seed and trial only, so
    /// every controller mode sees the same gust.
    pub fn trial_seed(&self) -> u64 {
        match self.kind {
            ScenarioKind::TrainingEpisode => derive_seed(self.seed, Stream::Gust, self.trial),
            _ => derive_seed(self.seed, Stream::Evaluation, HELD_OUT_OFFSET + self.trial),
        }
    }
}

/// Simulation settings shared by every scenario of a run.
#[derive(Debug, Clone, Default)]
pub struct ExperimentSetup {
    pub env: EnvConfig,
    pub gust: GustRanges,
    pub sensor: SensorSetup,
}

/// Moves a sampled profile onto the hardware timeline: calm until `onset`,
/// the sampled ramp, then High until `duration`. The dip keeps its offset
/// into the High stage.
pub fn hardware_profile(sampled: &GustProfile, onset: f64, duration: f64) -> Result<GustProfile> {
    let high_start = onset + sampled.slope_duration;
    if high_start >= duration {
        return Err(Error::Config(format!(
            "gust ramp ends at {high_start} s, after the {duration} s timeline"
        )));
    }
    let dip_offset = (sampled.dip_time - sampled.high_start()).clamp(0.0, duration - high_start);
    let profile = GustProfile {
        u_low: 0.0,
        u_high: sampled.u_high,
        t_start_slope: onset,
        slope_duration: sampled.slope_duration,
        high_duration: duration - high_start,
        dip_depth: sampled.dip_depth,
        dip_time: high_start + dip_offset,
        dip_width: sampled.dip_width,
        direction: sampled.direction,
    };
    profile.validate()?;
    Ok(profile)
}

/// The wind profile a scenario applies.
pub fn scenario_profile(spec: &ScenarioSpec, ranges: &GustRanges) -> Result<GustProfile> {
    let base = spec.trial_seed();
    let sampled = match &spec.gust {
        GustSchedule::Calm => return Ok(GustProfile::calm()),
        GustSchedule::Fixed(p) => p.clone(),
        GustSchedule::Sampled => sample_gust_profile(&mut stream_rng(base, Stream::Gust, 0), ranges)?,
    };
    match spec.kind {
        ScenarioKind::HardwareTimeline => hardware_profile(&sampled, spec.gust_onset, spec.duration),
        _ => Ok(sampled),
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub spec: ScenarioSpec,
    pub profile: GustProfile,
    pub records: Vec<StepRecord>,
    /// Set when the episode stopped early on a fault.
    pub failed: Option<String>,
}

impl EpisodeTrace {
    pub fn is_complete(&self) -> bool {
        self.failed.is_none()
    }
}

pub fn run_episode(
    setup: &ExperimentSetup,
    spec: &ScenarioSpec,
    policy: Option<&Actor<f64>>,
) -> Result<EpisodeTrace> {
    spec.validate()?;
    if spec.kind == ScenarioKind::RelativeWindValidation {
        return Err(Error::Usage(
            "relative-wind validation flies its own trajectory; use relative_wind_validation".into(),
        ));
    }
    match (spec.mode.has_policy(), policy.is_some()) {
        (true, false) => return Err(Error::MissingCheckpoint(spec.mode.to_string())),
        (false, true) => {
            return Err(Error::Usage("the baseline controller takes no policy".into()))
        }
        _ => {}
    }

    let mut cfg = setup.env.clone();
    let steps = (spec.duration * cfg.control_hz).round() as usize;
    cfg.episode_steps = steps;
    let profile = scenario_profile(spec, &setup.gust)?;
    let base = spec.trial_seed();
    let init = match spec.kind {
        ScenarioKind::HardwareTimeline => {
            cfg.terminate_early = false;
            DroneState::hovering(&cfg.drone, cfg.setpoint())?
        }
        _ => sample_initial_state(&cfg, &mut stream_rng(base, Stream::InitialState, 0))?,
    };
    let mut env = GustEnv::new(cfg, spec.mode, setup.sensor.build())?;
    let mut obs = env.reset(init, profile.clone(), stream_rng(base, Stream::SensorNoise, 0))?;
    // deterministic rollouts never draw from it
    let mut unused = stream_rng(base, Stream::Exploration, 0);

    let mut records = Vec::with_capacity(steps);
    let mut failed = None;
    for _ in 0..steps {
        let action = match policy {
            Some(actor) => match policy_forward(actor, &obs, false, &mut unused) {
                Ok(a) => a,
                Err(Error::TrainingFault(msg)) => {
                    failed = Some(msg);
                    break;
                }
                Err(e) => return Err(e),
            },
            None => Default::default(),
        };
        match env.step(&action) {
            Ok((tr, record)) => {
                records.push(record);
                obs = tr.obs;
                if tr.terminated {
                    failed = Some(format!("left the flight envelope at t = {:.3} s", env.state().t));
                    break;
                }
            }
            Err(e @ Error::SimulationFault { .. }) => {
                failed = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EpisodeTrace {
        spec: spec.clone(),
        profile,
        records,
        failed,
    })
}

pub const TRACE_HEADER: &str = "t,x,y,z,vx,vy,vz,roll,pitch,yaw,p,q,r,x_sp,y_sp,z_sp,\
omega_sp_x,omega_sp_y,omega_sp_z,thrust_sp,omega_net_x,omega_net_y,omega_net_z,thrust_net,\
wind_x,wind_y,wind_z,est_speed,est_direction,filtered_wind_x,res_p,res_q,res_r,res_thrust,\
duty_1,duty_2,duty_3,duty_4";

fn push3(row: &mut Vec<f64>, v: &Vector3<f64>) {
    row.extend([v.x, v.y, v.z]);
}

pub fn write_trace_csv<W: Write>(out: &mut W, trace: &EpisodeTrace) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    let mut row = Vec::with_capacity(38);
    for rec in &trace.records {
        row.clear();
        let s = &rec.state;
        let e = s.euler();
        let sp = &rec.setpoints;
        row.push(rec.t);
        push3(&mut row, &s.r);
        push3(&mut row, &s.v);
        row.extend([e.roll, e.pitch, e.yaw]);
        push3(&mut row, &s.w);
        push3(&mut row, &sp.r_sp);
        push3(&mut row, &sp.omega_sp);
        row.push(sp.thrust_sp);
        push3(&mut row, &sp.omega_net);
        row.push(sp.thrust_net);
        push3(&mut row, &rec.wind.velocity);
        row.extend([rec.estimate.speed, rec.estimate.direction, rec.filtered_wind]);
        push3(&mut row, &rec.residual.rates);
        row.push(rec.residual.thrust);
        row.extend(rec.command.duty().iter());
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
