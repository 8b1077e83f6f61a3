//! Forward model of the five-channel hot-wire tower.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const CHANNELS: usize = 5;

/// Time constant whose first-order -3 dB bandwidth is 570 Hz.
pub const DEFAULT_TIME_CONSTANT: f64 = 1.0 / (2.0 * PI * 570.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MastReading {
    pub bridge_voltages: [f64; CHANNELS],
    pub t: f64,
}

impl MastReading {
    pub fn is_finite(&self) -> bool {
        self.bridge_voltages.iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// One hot-wire element: King's law `E^2 = A + B U^n`, a first-order lag
/// and additive Gaussian voltage noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorChannelModel {
    pub kings_a: f64,
    pub kings_b: f64,
    pub kings_n: f64,
    /// Direction the element faces in the sensor (body) frame, rad.
    pub azimuth_offset: f64,
    pub time_constant: f64,
    pub noise_std: f64,
}

impl SensorChannelModel {
    pub fn steady_state_voltage(&self, effective_speed: f64) -> f64 {
        (self.kings_a + self.kings_b * effective_speed.max(0.0).powf(self.kings_n)).sqrt()
    }

    /// -3 dB bandwidth of the lag, Hz.
    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / (2.0 * PI * self.time_constant)
    }
}

/// Tower-level configuration; the five channel models are derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MastConfig {
    pub kings_a: f64,
    pub kings_b: f64,
    pub kings_n: f64,
    /// Directional gain floor for flow arriving from behind an element.
    pub gain_floor: f64,
    pub time_constant: f64,
    pub noise_std: f64,
    /// Bridge output range, V.
    pub voltage_min: f64,
    pub voltage_max: f64,
}

impl Default for MastConfig {
    fn default() -> Self {
        Self {
            kings_a: 1.2,
            kings_b: 0.9,
            kings_n: 0.45,
            gain_floor: 0.15,
            time_constant: DEFAULT_TIME_CONSTANT,
            noise_std: 0.002,
            voltage_min: 0.0,
            voltage_max: 10.0,
        }
    }
}

impl MastConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kings_a > 0.0
            && self.kings_b > 0.0
            && self.kings_n > 0.0
            && self.kings_n <= 1.0
            && (0.0..1.0).contains(&self.gain_floor)
            && self.time_constant > 0.0
            && self.noise_std >= 0.0
            && self.voltage_min < self.voltage_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid sensor configuration {self:?}")))
        }
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise_std: 0.0,
            ..self.clone()
        }
    }

    pub fn channels(&self) -> [SensorChannelModel; CHANNELS] {
        std::array::from_fn(|k| SensorChannelModel {
            kings_a: self.kings_a,
            kings_b: self.kings_b,
            kings_n: self.kings_n,
            azimuth_offset: 2.0 * PI * k as f64 / CHANNELS as f64,
            time_constant: self.time_constant,
            noise_std: self.noise_std,
        })
    }
}

/// Directional gain: cosine lobe facing the element, floored for flow from
/// the side or behind.
pub fn directional_gain(delta: f64, floor: f64) -> f64 {
    delta.cos().max(floor)
}

/// Horizontal speed and azimuth of a body-frame flow vector.
pub fn flow_polar(flow_body: &Vector3<f64>) -> (f64, f64) {
    (flow_body.xy().norm(), flow_body.y.atan2(flow_body.x))
}

/// Per-channel effective cooling speed for a body-frame flow.
pub fn effective_speeds(
    channels: &[SensorChannelModel; CHANNELS],
    gain_floor: f64,
    flow_body: &Vector3<f64>,
) -> [f64; CHANNELS] {
    let (speed, azimuth) = flow_polar(flow_body);
    std::array::from_fn(|k| speed * directional_gain(azimuth - channels[k].azimuth_offset, gain_floor))
}

pub fn steady_state_voltages(
    channels: &[SensorChannelModel; CHANNELS],
    gain_floor: f64,
    flow_body: &Vector3<f64>,
) -> [f64; CHANNELS] {
    let u = effective_speeds(channels, gain_floor, flow_body);
    std::array::from_fn(|k| channels[k].steady_state_voltage(u[k]))
}

/// Noise-free lag update toward the steady-state voltages.
pub fn lagged_voltages(
    channels: &[SensorChannelModel; CHANNELS],
    gain_floor: f64,
    flow_body: &Vector3<f64>,
    prev: &[f64; CHANNELS],
    dt: f64,
) -> [f64; CHANNELS] {
    let target = steady_state_voltages(channels, gain_floor, flow_body);
    std::array::from_fn(|k| {
        let decay = (-dt / channels[k].time_constant).exp();
        target[k] + (prev[k] - target[k]) * decay
    })
}

pub fn add_noise(
    channels: &[SensorChannelModel; CHANNELS],
    clean: &[f64; CHANNELS],
    range: (f64, f64),
    rng: &mut SimRng,
) -> [f64; CHANNELS] {
    std::array::from_fn(|k| {
        let noise = if channels[k].noise_std > 0.0 {
            Normal::new(0.0, channels[k].noise_std)
                .expect("positive std")
                .sample(rng)
        } else {
            0.0
        };
        (clean[k] + noise).clamp(range.0, range.1)
    })
}

/// One sensor sample: lag from `prev` toward the King's-law response to
/// `flow_body`, then additive noise. With zero noise this is deterministic.
pub fn forward_mast(
    config: &MastConfig,
    channels: &[SensorChannelModel; CHANNELS],
    flow_body: &Vector3<f64>,
    prev: &MastReading,
    dt: f64,
    rng: &mut SimRng,
) -> MastReading {
    let clean = lagged_voltages(channels, config.gain_floor, flow_body, &prev.bridge_voltages, dt);
    MastReading {
        bridge_voltages: add_noise(channels, &clean, (config.voltage_min, config.voltage_max), rng),
        t: prev.t + dt,
    }
}
