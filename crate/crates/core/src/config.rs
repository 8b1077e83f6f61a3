//! TOML run configuration. Every section is optional and falls back to the
//! library defaults; unknown keys are rejected with the offending line.
//!
//! ```toml
//! seed = 7
//!
//! [sac]
//! total_steps = 200000
//!
//! [scenario]
//! trials = 10
//!
//! [sensor]
//! mode = "emulated"
//! models = "runs/sensor_models"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{ControlGains, ControllerMode};
use crate::dynamics::DroneParams;
use crate::env::{EnvConfig, SensorSetup};
use crate::error::{Error, Result};
use crate::experiment::{
    ExperimentSetup, GustSchedule, ScenarioKind, ScenarioSpec, HARDWARE_DURATION,
    HARDWARE_GUST_ONSET,
};
use crate::mast::{CalibrationConfig, InverseModels, MastConfig, SensorMode};
use crate::policy::SacHyperparams;
use crate::wind::{DragParams, GustRanges};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream.
    pub seed: u64,
    pub drone: DroneParams,
    pub drag: DragParams,
    pub gains: ControlGains,
    pub sim: SimConfig,
    pub gust: GustRanges,
    pub sac: SacHyperparams,
    pub train: TrainConfig,
    pub scenario: ScenarioConfig,
    pub sensor: SensorConfig,
    pub calibration: CalibrationConfig,
    pub output: OutputConfig,
}

/// Episode timing, initial-state randomization and termination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub control_hz: f64,
    pub physics_substeps: usize,
    pub episode_steps: usize,
    pub init_position: f64,
    pub init_roll_pitch: f64,
    pub init_yaw: f64,
    pub setpoint: [f64; 3],
    pub terminate_early: bool,
    pub max_position_error: f64,
    pub max_tilt: f64,
    pub terminal_reward: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            control_hz: e.control_hz,
            physics_substeps: e.physics_substeps,
            episode_steps: e.episode_steps,
            init_position: e.init_position,
            init_roll_pitch: e.init_roll_pitch,
            init_yaw: e.init_yaw,
            setpoint: e.setpoint,
            terminate_early: e.terminate_early,
            max_position_error: e.max_position_error,
            max_tilt: e.max_tilt,
            terminal_reward: e.terminal_reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: ControllerMode,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: ControllerMode::WindAware,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration: f64,
    pub gust_onset: f64,
    pub trials: usize,
    pub modes: Vec<ControllerMode>,
    /// Checkpoint paths; a missing entry means `<output.dir>/<mode>.net`.
    pub wind_aware_checkpoint: Option<PathBuf>,
    pub wind_unaware_checkpoint: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::HardwareTimeline,
            duration: HARDWARE_DURATION,
            gust_onset: HARDWARE_GUST_ONSET,
            trials: 10,
            modes: vec![
                ControllerMode::WindAware,
                ControllerMode::WindUnaware,
                ControllerMode::Baseline,
            ],
            wind_aware_checkpoint: None,
            wind_unaware_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub mode: SensorMode,
    /// Directory with trained inverse networks, required in emulated mode.
    pub models: Option<PathBuf>,
    pub mast: MastConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub emit_svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            emit_svg: false,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            drone: DroneParams::default(),
            drag: DragParams::default(),
            gains: ControlGains::default(),
            sim: SimConfig::default(),
            gust: GustRanges::default(),
            sac: SacHyperparams::default(),
            train: TrainConfig::default(),
            scenario: ScenarioConfig::default(),
            sensor: SensorConfig::default(),
            calibration: CalibrationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates. `origin` names the source in error messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes `resolved_config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("resolved_config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        self.env().validate()?;
        self.gust.validate()?;
        self.sac.validate()?;
        if self.train.workers == 0 {
            return Err(Error::Config("train.workers must be at least 1".into()));
        }
        if self.scenario.modes.is_empty() {
            return Err(Error::Config("scenario.modes is empty".into()));
        }
        self.scenario_template().validate()?;
        if self.sensor.mode == SensorMode::Emulated && self.sensor.models.is_none() {
            return Err(Error::Config(
                "sensor.mode = \"emulated\" needs sensor.models (run sensor-calibrate first)".into(),
            ));
        }
        let c = &self.calibration;
        if !(c.speed_min >= 0.0 && c.speed_max > c.speed_min) {
            return Err(Error::Config(format!(
                "calibration speeds [{}, {}] are not an increasing range",
                c.speed_min, c.speed_max
            )));
        }
        Ok(())
    }

    pub fn env(&self) -> EnvConfig {
        let s = &self.sim;
        EnvConfig {
            drone: self.drone.clone(),
            drag: self.drag.clone(),
            gains: self.gains.clone(),
            control_hz: s.control_hz,
            physics_substeps: s.physics_substeps,
            episode_steps: s.episode_steps,
            init_position: s.init_position,
            init_roll_pitch: s.init_roll_pitch,
            init_yaw: s.init_yaw,
            setpoint: s.setpoint,
            terminate_early: s.terminate_early,
            max_position_error: s.max_position_error,
            max_tilt: s.max_tilt,
            terminal_reward: s.terminal_reward,
        }
    }

    /// Loads the inverse networks in emulated mode.
    pub fn sensor_setup(&self) -> Result<SensorSetup> {
        match (self.sensor.mode, &self.sensor.models) {
            (SensorMode::Ideal, _) => Ok(SensorSetup::Ideal),
            (SensorMode::Emulated, Some(dir)) => Ok(SensorSetup::Emulated {
                config: self.sensor.mast.clone(),
                models: Arc::new(InverseModels::load(dir)?),
            }),
            (SensorMode::Emulated, None) => Err(Error::Config("sensor.models is not set".into())),
        }
    }

    pub fn experiment_setup(&self) -> Result<ExperimentSetup> {
        Ok(ExperimentSetup {
            env: self.env(),
            gust: self.gust.clone(),
            sensor: self.sensor_setup()?,
        })
    }

    /// Scenario with trial 0 and the first configured mode.
    pub fn scenario_template(&self) -> ScenarioSpec {
        let sc = &self.scenario;
        ScenarioSpec {
            kind: sc.kind,
            duration: sc.duration,
            gust_onset: sc.gust_onset,
            gust: GustSchedule::Sampled,
            mode: sc.modes.first().copied().unwrap_or(ControllerMode::Baseline),
            seed: self.seed,
            trial: 0,
        }
    }

    pub fn checkpoint_path(&self, mode: ControllerMode) -> PathBuf {
        let configured = match mode {
            ControllerMode::WindAware => self.scenario.wind_aware_checkpoint.clone(),
            ControllerMode::WindUnaware => self.scenario.wind_unaware_checkpoint.clone(),
            ControllerMode::Baseline => None,
        };
        configured.unwrap_or_else(|| self.output.dir.join(format!("{mode}.net")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("", "test").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_its_line() {
        let text = "seed = 1\n\n[sac]\ngamma = 0.98\nlearning_rat = 0.1\n";
        let err = RunConfig::from_toml(text, "run.toml").unwrap_err().to_string();
        assert!(err.contains("run.toml"), "{err}");
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("learning_rat"), "{err}");
    }

    #[test]
    fn invalid_value_is_rejected() {
        let err = RunConfig::from_toml("[sac]\ngamma = 1.5\n", "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn emulated_sensor_needs_models() {
        assert!(RunConfig::from_toml("[sensor]\nmode = \"emulated\"\n", "x").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.sac.total_steps = 1234;
        cfg.scenario.modes = vec![ControllerMode::Baseline];
        cfg.gust.u_high.max = 5.5;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text, "snapshot").unwrap(), cfg);
    }
}
