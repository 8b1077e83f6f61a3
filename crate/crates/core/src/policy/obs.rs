//! Policy observation: state relative to the setpoint plus wind history,
//! scaled by fixed ranges.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::control::ControllerMode;
use crate::dynamics::DroneState;
use crate::mast::{WindHistory, HISTORY_LEN};

pub const OBS_DIM: usize = 17;
pub const ACTION_DIM: usize = 4;
/// Index of the first wind-history slot.
pub const WIND_SLOTS: usize = OBS_DIM - HISTORY_LEN;

pub const POSITION_SCALE: f64 = 1.0;
pub const ANGLE_SCALE: f64 = PI;
pub const VELOCITY_SCALE: f64 = 5.0;
pub const RATE_SCALE: f64 = 2.0;
pub const WIND_SCALE: f64 = 6.0;

/// `[r - r_sp, (roll, pitch, yaw), v, world rates, wind history]`, each
/// divided by its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    /// Wind slots are zero unless `mode` is wind-aware.
    pub fn build(
        state: &DroneState,
        r_sp: &Vector3<f64>,
        history: &WindHistory,
        mode: ControllerMode,
    ) -> Self {
        let mut o = [0.0; OBS_DIM];
        let e = state.r - r_sp;
        let euler = state.euler().as_vector();
        let rates = state.world_rates();
        for i in 0..3 {
            o[i] = e[i] / POSITION_SCALE;
            o[3 + i] = euler[i] / ANGLE_SCALE;
            o[6 + i] = state.v[i] / VELOCITY_SCALE;
            o[9 + i] = rates[i] / RATE_SCALE;
        }
        if mode == ControllerMode::WindAware {
            for k in 0..HISTORY_LEN {
                o[WIND_SLOTS + k] = history[k] / WIND_SCALE;
            }
        }
        Self(o)
    }

    pub fn masked(mut self, mode: ControllerMode) -> Self {
        if mode != ControllerMode::WindAware {
            self.0[WIND_SLOTS..].fill(0.0);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unaware_mode_zeroes_wind() {
        let s = DroneState::at_rest(Vector3::new(0.5, 0.0, 1.0));
        let h = [3.0; HISTORY_LEN];
        let aware = Observation::build(&s, &Vector3::new(0.0, 0.0, 1.0), &h, ControllerMode::WindAware);
        let unaware =
            Observation::build(&s, &Vector3::new(0.0, 0.0, 1.0), &h, ControllerMode::WindUnaware);
        assert_eq!(aware.0[0], 0.5);
        assert_eq!(aware.0[WIND_SLOTS], 0.5);
        assert!(unaware.0[WIND_SLOTS..].iter().all(|&x| x == 0.0));
        assert_eq!(aware.masked(ControllerMode::WindUnaware), unaware);
    }
}
