//! Hot-wire wind sensing: forward sensor model, learned inverse, the
//! rolling-max filter and the wind history seen by the policy.

mod filter;
mod inverse;
mod sensor;

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use filter::{
    rolling_max_filter, RollingMax, WindHistory, WindHistoryBuffer, HISTORY_LEN, HISTORY_STRIDE,
};
pub use inverse::{
    estimate_wind, evaluate, generate_calibration_set, percentile, train_inverse_models,
    wrap_angle, CalibrationConfig, CalibrationSample, CalibrationSet, ErrorStats, InverseModels,
    WindEstimate, WindEstimator,
};
pub use sensor::{
    add_noise, directional_gain, effective_speeds, flow_polar, forward_mast, lagged_voltages,
    steady_state_voltages, MastConfig, MastReading, SensorChannelModel, CHANNELS,
    DEFAULT_TIME_CONSTANT,
};

use crate::dynamics::DroneState;
use crate::error::Result;
use crate::rng::SimRng;
use crate::wind::WindSample;

/// Rolling-max window, s.
pub const FILTER_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorMode {
    /// The estimate is the true simulated wind.
    #[default]
    Ideal,
    /// Readings go through the forward model and the inverse networks.
    Emulated,
}

/// Per-episode sensing pipeline: sample at the physics rate, keep the
/// rolling max of the world-X wind estimate, stack history at control rate.
#[derive(Debug, Clone)]
pub struct WindSensor {
    mode: SensorMode,
    config: MastConfig,
    channels: [SensorChannelModel; CHANNELS],
    models: Option<Arc<InverseModels>>,
    reading: Option<MastReading>,
    filter: RollingMax,
    history: WindHistoryBuffer,
    last: Option<WindEstimate>,
    last_x: f64,
}

impl WindSensor {
    pub fn ideal() -> Self {
        Self::build(SensorMode::Ideal, MastConfig::default(), None)
    }

    pub fn emulated(config: MastConfig, models: Arc<InverseModels>) -> Self {
        Self::build(SensorMode::Emulated, config, Some(models))
    }

    fn build(mode: SensorMode, config: MastConfig, models: Option<Arc<InverseModels>>) -> Self {
        Self {
            mode,
            channels: config.channels(),
            config,
            models,
            reading: None,
            filter: RollingMax::new(FILTER_WINDOW),
            history: WindHistoryBuffer::new(),
            last: None,
            last_x: 0.0,
        }
    }

    pub fn mode(&self) -> SensorMode {
        self.mode
    }

    pub fn reset(&mut self) {
        self.reading = None;
        self.filter.clear();
        self.history.clear();
        self.last = None;
        self.last_x = 0.0;
    }

    /// Takes one sensor sample and returns the raw estimate. In emulated
    /// mode the direction is converted to a world azimuth with the vehicle
    /// yaw.
    pub fn sample(
        &mut self,
        wind: &WindSample,
        state: &DroneState,
        dt: f64,
        rng: &mut SimRng,
    ) -> Result<WindEstimate> {
        let estimate = match self.mode {
            SensorMode::Ideal => {
                let v = wind.velocity;
                WindEstimate {
                    speed: v.xy().norm(),
                    direction: if v.xy().norm() > 0.0 {
                        wrap_angle(v.y.atan2(v.x))
                    } else {
                        0.0
                    },
                    t: wind.t,
                }
            }
            SensorMode::Emulated => {
                let flow_body: Vector3<f64> =
                    state.q.inverse_transform_vector(&(wind.velocity - state.v));
                let prev = self.reading.unwrap_or_else(|| {
                    // settle on the first sample so the lag starts at steady state
                    MastReading {
                        bridge_voltages: steady_state_voltages(
                            &self.channels,
                            self.config.gain_floor,
                            &flow_body,
                        ),
                        t: wind.t - dt,
                    }
                });
                let reading = forward_mast(&self.config, &self.channels, &flow_body, &prev, dt, rng);
                self.reading = Some(reading);
                let models = self.models.as_ref().expect("emulated sensor has models");
                let est = models.estimate_batch(&[&reading])[0];
                WindEstimate {
                    speed: est.speed,
                    direction: wrap_angle(est.direction + state.euler().yaw),
                    t: wind.t,
                }
            }
        };
        self.last_x = self.filter.push(wind.t, estimate.speed * estimate.direction.cos());
        self.last = Some(estimate);
        Ok(estimate)
    }

    /// Filtered world-X wind, m/s.
    pub fn filtered_x(&self) -> f64 {
        self.last_x
    }

    pub fn last_estimate(&self) -> Option<WindEstimate> {
        self.last
    }

    /// Called once per control step.
    pub fn push_history(&mut self) {
        self.history.push(self.last_x);
    }

    pub fn history(&self) -> WindHistory {
        self.history.get()
    }
}
