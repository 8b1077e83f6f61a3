//! Still-air back-and-forth flight comparing vehicle speed with the relative
//! wind seen by the emulated sensor.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ExperimentSetup;
use crate::control::{CascadeController, ControllerMode, ResidualAction};
use crate::dynamics::{step, DroneState};
use crate::env::SensorSetup;
use crate::error::{Error, Result};
use crate::mast::CalibrationConfig;
use crate::rng::{stream_rng, Stream};
use crate::wind::{drag_force, WindSample};

/// Trapezoidal legs along X, alternating direction, each `distance` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelativeWindProfile {
    /// m/s
    pub cruise_speed: f64,
    /// m
    pub distance: f64,
    /// m/s^2
    pub acceleration: f64,
    pub legs: usize,
    /// Hover before the first leg and after each leg, s.
    pub pause: f64,
    /// Samples in the rolling average of the estimate.
    pub smoothing: usize,
}

impl Default for RelativeWindProfile {
    fn default() -> Self {
        Self {
            cruise_speed: 2.0,
            distance: 8.0,
            acceleration: 1.0,
            legs: 4,
            pause: 2.0,
            smoothing: 10,
        }
    }
}

impl RelativeWindProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cruise_speed > 0.0
            && self.distance > 0.0
            && self.acceleration > 0.0
            && self.pause >= 0.0
            && self.smoothing > 0
            && self.cruise_speed * self.cruise_speed / self.acceleration <= self.distance;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("unflyable relative-wind profile {self:?}")))
        }
    }

    fn leg_time(&self) -> f64 {
        let ta = self.cruise_speed / self.acceleration;
        2.0 * ta + (self.distance - self.cruise_speed * ta) / self.cruise_speed
    }

    pub fn duration(&self) -> f64 {
        self.pause + self.legs as f64 * (self.leg_time() + self.pause)
    }

    /// X setpoint and its rate. The vehicle starts at `-distance / 2`.
    pub fn setpoint_at(&self, t: f64) -> (f64, f64) {
        let (v, a) = (self.cruise_speed, self.acceleration);
        let ta = v / a;
        let leg = self.leg_time();
        let mut x = -self.distance / 2.0;
        let mut tau = t - self.pause;
        for k in 0..self.legs {
            let dir = if k % 2 == 0 { 1.0 } else { -1.0 };
            if tau < 0.0 {
                return (x, 0.0);
            }
            if tau < leg {
                let (s, ds) = if tau < ta {
                    (0.5 * a * tau * tau, a * tau)
                } else if tau < leg - ta {
                    (0.5 * v * ta + v * (tau - ta), v)
                } else {
                    let r = leg - tau;
                    (self.distance - 0.5 * a * r * r, a * r)
                };
                return (x + dir * s, dir * ds);
            }
            x += dir * self.distance;
            tau -= leg + self.pause;
        }
        (x, 0.0)
    }
}

/// Calibration spanning zero flow, so hover reads near zero.
pub fn validation_calibration() -> CalibrationConfig {
    CalibrationConfig {
        speed_min: 0.0,
        n_speeds: 51,
        ..CalibrationConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeWindSeries {
    pub t: Vec<f64>,
    /// Horizontal ground speed, m/s.
    pub uav_speed: Vec<f64>,
    /// Raw relative-wind speed estimate, m/s.
    pub estimate: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Pearson correlation of `uav_speed` and `smoothed`.
    pub correlation: f64,
}

/// Trailing mean over up to `n` samples.
pub fn rolling_average(xs: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= n {
            sum -= xs[i - n];
        }
        out.push(sum / (i + 1).min(n) as f64);
    }
    out
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Flies `profile` in still air with the baseline cascade and samples the
/// sensor every physics step; the series are taken once per control step.
pub fn relative_wind_validation(
    setup: &ExperimentSetup,
    profile: &RelativeWindProfile,
    seed: u64,
) -> Result<RelativeWindSeries> {
    profile.validate()?;
    if !matches!(setup.sensor, SensorSetup::Emulated { .. }) {
        return Err(Error::Usage("relative-wind validation needs the emulated sensor".into()));
    }
    let cfg = &setup.env;
    cfg.validate()?;
    let mut sensor = setup.sensor.build();
    let mut noise = stream_rng(seed, Stream::SensorNoise, 0);
    let mut controller = CascadeController::new(cfg.drone.clone(), cfg.gains.clone(), ControllerMode::Baseline);
    let sp = cfg.setpoint();
    let (x0, _) = profile.setpoint_at(0.0);
    let mut state = DroneState::hovering(&cfg.drone, Vector3::new(x0, sp.y, sp.z))?;
    let dt = cfg.physics_dt();
    let still = |t| WindSample {
        velocity: Vector3::zeros(),
        t,
    };
    sensor.sample(&still(0.0), &state, dt, &mut noise)?;

    let steps = (profile.duration() * cfg.control_hz).ceil() as usize;
    let mut series = RelativeWindSeries {
        t: Vec::with_capacity(steps),
        uav_speed: Vec::with_capacity(steps),
        estimate: Vec::with_capacity(steps),
        smoothed: Vec::new(),
        correlation: f64::NAN,
    };
    for i in 0..steps {
        let t0 = i as f64 * cfg.control_dt();
        let (x_sp, v_sp) = profile.setpoint_at(t0);
        let setpoints = controller.setpoints(
            &state,
            &Vector3::new(x_sp, sp.y, sp.z),
            &Vector3::new(v_sp, 0.0, 0.0),
            &Vector3::zeros(),
            &ResidualAction::ZERO,
        );
        for k in 0..cfg.physics_substeps {
            let t = t0 + k as f64 * dt;
            state.t = t;
            if k > 0 {
                sensor.sample(&still(t), &state, dt, &mut noise)?;
            }
            let force = drag_force(&cfg.drag, &still(t), &state);
            let command = controller.motor_command(&state, &setpoints, dt);
            state = step(&cfg.drone, &state, &command, &force, dt)?;
        }
        state.t = (i + 1) as f64 * cfg.control_dt();
        let est = sensor.sample(&still(state.t), &state, dt, &mut noise)?;
        series.t.push(state.t);
        series.uav_speed.push(state.v.xy().norm());
        series.estimate.push(est.speed);
    }
    series.smoothed = rolling_average(&series.estimate, profile.smoothing);
    series.correlation = correlation(&series.uav_speed, &series.smoothed);
    Ok(series)
}

pub fn write_validation_csv<W: Write>(out: &mut W, s: &RelativeWindSeries) -> std::io::Result<()> {
    writeln!(out, "t,uav_speed,estimate,smoothed")?;
    for i in 0..s.t.len() {
        writeln!(out, "{},{},{},{}", s.t[i], s.uav_speed[i], s.estimate[i], s.smoothed[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setpoint_covers_the_distance_and_is_continuous() {
        let p = RelativeWindProfile::default();
        let (x0, _) = p.setpoint_at(0.0);
        let mut prev = x0;
        let (mut lo, mut hi) = (x0, x0);
        let dt = 1e-3;
        let mut t = 0.0;
        while t < p.duration() {
            let (x, v) = p.setpoint_at(t);
            assert!((x - prev).abs() <= p.cruise_speed * dt + 1e-9, "jump at {t}");
            assert!(v.abs() <= p.cruise_speed + 1e-12);
            lo = lo.min(x);
            hi = hi.max(x);
            prev = x;
            t += dt;
        }
        assert!((hi - lo - p.distance).abs() < 1e-6);
        assert!((p.setpoint_at(p.duration()).0 - x0).abs() < 1e-9);
    }

    #[test]
    fn rolling_average_matches_window_mean() {
        let xs: Vec<f64> = (0..30).map(|i| (i * i % 7) as f64).collect();
        let avg = rolling_average(&xs, 10);
        for i in 0..xs.len() {
            let lo = i.saturating_sub(9);
            let want = xs[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64;
            assert!((avg[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_sensor_is_rejected() {
        let r = relative_wind_validation(&ExperimentSetup::default(), &RelativeWindProfile::default(), 0);
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
