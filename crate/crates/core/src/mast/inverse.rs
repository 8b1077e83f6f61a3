//! Learned inverse sensor model: bridge voltages to wind speed and direction.
//!
//! Both networks see the zero-flow-referenced squared voltages
//! `x_k = E_k^2 - E0_k^2`. The direction network gets the pattern
//! `x / sum|x|` and regresses `(sin, cos)` of the azimuth; the speed network
//! gets `x` directly. Inputs are standardized with training-set statistics.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sensor::{add_noise, steady_state_voltages, MastConfig, MastReading, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{read_net, write_net, Activation, Adam, Mlp, NetFile};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    pub n_speeds: usize,
    pub n_angles: usize,
    /// Noisy readings per grid point.
    pub repeats: usize,
    pub n_test: usize,
    pub angle_hidden: Vec<usize>,
    pub speed_hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            speed_min: 1.3,
            speed_max: 5.0,
            n_speeds: 38,
            n_angles: 120,
            repeats: 1,
            n_test: 2000,
            angle_hidden: vec![64, 64],
            speed_hidden: vec![32],
            steps: 30_000,
            batch_size: 128,
            learning_rate: 3e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub reading: MastReading,
    pub speed: f64,
    /// Flow azimuth in the sensor frame, rad.
    pub angle: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub zero_flow: [f64; CHANNELS],
    pub train: Vec<CalibrationSample>,
    pub test: Vec<CalibrationSample>,
}

fn sample_at(config: &MastConfig, speed: f64, angle: f64, rng: &mut SimRng) -> CalibrationSample {
    let channels = config.channels();
    let flow = Vector3::new(speed * angle.cos(), speed * angle.sin(), 0.0);
    let clean = steady_state_voltages(&channels, config.gain_floor, &flow);
    CalibrationSample {
        reading: MastReading {
            bridge_voltages: add_noise(&channels, &clean, (config.voltage_min, config.voltage_max), rng),
            t: 0.0,
        },
        speed,
        angle: wrap_angle(angle),
    }
}

/// Wind-tunnel style sweep: a dense speed x angle grid for training, random
/// off-grid flows for held-out testing, and a zero-flow reference.
pub fn generate_calibration_set(
    config: &MastConfig,
    cal: &CalibrationConfig,
    rng: &mut SimRng,
) -> CalibrationSet {
    use rand::Rng;
    let channels = config.channels();
    let n_ref = 200;
    let mut zero_flow = [0.0; CHANNELS];
    let clean_zero = steady_state_voltages(&channels, config.gain_floor, &Vector3::zeros());
    for _ in 0..n_ref {
        let r = add_noise(&channels, &clean_zero, (config.voltage_min, config.voltage_max), rng);
        for k in 0..CHANNELS {
            zero_flow[k] += r[k] / n_ref as f64;
        }
    }

    let mut train = Vec::with_capacity(cal.n_speeds * cal.n_angles * cal.repeats.max(1));
    for i in 0..cal.n_speeds {
        let speed = if cal.n_speeds > 1 {
            cal.speed_min + (cal.speed_max - cal.speed_min) * i as f64 / (cal.n_speeds - 1) as f64
        } else {
            cal.speed_min
        };
        for j in 0..cal.n_angles {
            let angle = 2.0 * PI * j as f64 / cal.n_angles as f64;
            for _ in 0..cal.repeats.max(1) {
                train.push(sample_at(config, speed, angle, rng));
            }
        }
    }
    let test = (0..cal.n_test)
        .map(|_| {
            let speed = rng.random_range(cal.speed_min..=cal.speed_max);
            let angle = rng.random_range(0.0..2.0 * PI);
            sample_at(config, speed, angle, rng)
        })
        .collect();
    CalibrationSet {
        zero_flow,
        train,
        test,
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindEstimate {
    pub speed: f64,
    /// Azimuth the flow is moving toward, rad, in `(-pi, pi]`.
    pub direction: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(1e-9));
        Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        }
    }

    fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
    }
}

/// Trained direction and speed networks plus their preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModels {
    pub angle_net: Mlp<f64>,
    pub speed_net: Mlp<f64>,
    zero_flow: [f64; CHANNELS],
    angle_norm: Standardizer,
    speed_norm: Standardizer,
    speed_mean: f64,
    speed_std: f64,
}

fn raw_features(reading: &MastReading, zero_flow: &[f64; CHANNELS]) -> [f64; CHANNELS] {
    std::array::from_fn(|k| reading.bridge_voltages[k].powi(2) - zero_flow[k].powi(2))
}

fn pattern(x: &[f64; CHANNELS]) -> [f64; CHANNELS] {
    let total: f64 = x.iter().map(|v| v.abs()).sum::<f64>() + 1e-9;
    std::array::from_fn(|k| x[k] / total)
}

fn feature_matrix<F: Fn(&[f64; CHANNELS]) -> [f64; CHANNELS]>(
    readings: &[&MastReading],
    zero_flow: &[f64; CHANNELS],
    f: F,
) -> Array2<f64> {
    let mut x = Array2::zeros((readings.len(), CHANNELS));
    for (i, r) in readings.iter().enumerate() {
        let feats = f(&raw_features(r, zero_flow));
        for k in 0..CHANNELS {
            x[[i, k]] = feats[k];
        }
    }
    x
}

/// Minibatch Adam on mean squared error with a cosine learning-rate decay.
pub(crate) fn fit_mse(
    net: &mut Mlp<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut SimRng,
) -> f64 {
    let n = x.nrows();
    let batch_size = batch_size.min(n).max(1);
    let mut opt = Adam::new(lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut last_loss = f64::NAN;
    for step in 0..steps {
        opt.lr = 1e-5 + 0.5 * (lr - 1e-5) * (1.0 + (PI * step as f64 / steps as f64).cos());
        if cursor + batch_size > n {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch_size];
        cursor += batch_size;
        let xb = x.select(Axis(0), idx);
        let yb = y.select(Axis(0), idx);
        let trace = net.forward_trace(xb.view());
        let diff = trace.output() - &yb;
        last_loss = diff.mapv(|d| d * d).mean().unwrap_or(f64::NAN);
        let grad = diff * (2.0 / (batch_size * y.ncols()) as f64);
        let (grads, _) = net.backward(&trace, grad, false);
        opt.update(net.tensors_mut(), grads.tensors());
    }
    last_loss
}

fn check_coverage(samples: &[CalibrationSample]) -> Result<()> {
    let mut angles: Vec<i64> = samples
        .iter()
        .map(|s| (s.angle.to_degrees() * 1e6).round() as i64)
        .collect();
    angles.sort_unstable();
    angles.dedup();
    if angles.len() < 8 {
        return Err(Error::Coverage(format!(
            "{} distinct angles, need at least 8",
            angles.len()
        )));
    }
    let mut speeds: Vec<i64> = samples.iter().map(|s| (s.speed * 1e9).round() as i64).collect();
    speeds.sort_unstable();
    speeds.dedup();
    if speeds.len() < 2 {
        return Err(Error::Coverage("calibration needs at least two speeds".into()));
    }
    Ok(())
}

pub fn train_inverse_models(
    set: &CalibrationSet,
    cal: &CalibrationConfig,
    rng: &mut SimRng,
) -> Result<InverseModels> {
    check_coverage(&set.train)?;
    let readings: Vec<&MastReading> = set.train.iter().map(|s| &s.reading).collect();

    let mut xa = feature_matrix(&readings, &set.zero_flow, pattern);
    let angle_norm = Standardizer::fit(&xa);
    angle_norm.apply(&mut xa);
    let ya = Array2::from_shape_fn((set.train.len(), 2), |(i, j)| {
        let a = set.train[i].angle;
        if j == 0 {
            a.sin()
        } else {
            a.cos()
        }
    });
    let mut dims = vec![CHANNELS];
    dims.extend(&cal.angle_hidden);
    dims.push(2);
    let mut angle_net = Mlp::new(&dims, Activation::Relu, Activation::Identity, rng);
    fit_mse(&mut angle_net, &xa, &ya, cal.steps, cal.batch_size, cal.learning_rate, rng);

    let mut xs = feature_matrix(&readings, &set.zero_flow, |x| *x);
    let speed_norm = Standardizer::fit(&xs);
    speed_norm.apply(&mut xs);
    let speeds = Array1::from_iter(set.train.iter().map(|s| s.speed));
    let speed_mean = speeds.mean().unwrap_or(0.0);
    let speed_std = speeds.std(0.0).max(1e-9);
    let ys = speeds.mapv(|s| (s - speed_mean) / speed_std).insert_axis(Axis(1));
    let mut dims = vec![CHANNELS];
    dims.extend(&cal.speed_hidden);
    dims.push(1);
    let mut speed_net = Mlp::new(&dims, Activation::Tanh, Activation::Identity, rng);
    fit_mse(&mut speed_net, &xs, &ys, cal.steps, cal.batch_size, cal.learning_rate, rng);

    if !(angle_net.is_finite() && speed_net.is_finite()) {
        return Err(Error::TrainingFault("sensor network diverged".into()));
    }
    Ok(InverseModels {
        angle_net,
        speed_net,
        zero_flow: set.zero_flow,
        angle_norm,
        speed_norm,
        speed_mean,
        speed_std,
    })
}

impl InverseModels {
    pub fn estimate_batch(&self, readings: &[&MastReading]) -> Vec<WindEstimate> {
        if readings.is_empty() {
            return Vec::new();
        }
        let mut xa = feature_matrix(readings, &self.zero_flow, pattern);
        self.angle_norm.apply(&mut xa);
        let mut xs = feature_matrix(readings, &self.zero_flow, |x| *x);
        self.speed_norm.apply(&mut xs);
        let a = self.angle_net.forward(xa.view());
        let s = self.speed_net.forward(xs.view());
        readings
            .iter()
            .enumerate()
            .map(|(i, r)| WindEstimate {
                speed: (s[[i, 0]] * self.speed_std + self.speed_mean).max(0.0),
                direction: wrap_angle(a[[i, 0]].atan2(a[[i, 1]])),
                t: r.t,
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut angle_extras = self.zero_flow.to_vec();
        angle_extras.extend(&self.angle_norm.mean);
        angle_extras.extend(&self.angle_norm.std);
        let mut speed_extras = self.zero_flow.to_vec();
        speed_extras.extend(&self.speed_norm.mean);
        speed_extras.extend(&self.speed_norm.std);
        speed_extras.extend([self.speed_mean, self.speed_std]);
        for (name, net, extras) in [
            ("angle.net", &self.angle_net, angle_extras),
            ("speed.net", &self.speed_net, speed_extras),
        ] {
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_net(
                &mut file,
                &NetFile {
                    net: net.clone(),
                    extras,
                },
            )
            .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<NetFile> {
            let path = dir.join(name);
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            read_net(std::io::BufReader::new(file), None)
        };
        let angle = open("angle.net")?;
        let speed = open("speed.net")?;
        if angle.extras.len() != 3 * CHANNELS || speed.extras.len() != 3 * CHANNELS + 2 {
            return Err(Error::WeightFormat("sensor net extras have wrong length".into()));
        }
        let slice5 = |v: &[f64], i: usize| v[i * CHANNELS..(i + 1) * CHANNELS].to_vec();
        Ok(Self {
            zero_flow: std::array::from_fn(|k| angle.extras[k]),
            angle_norm: Standardizer {
                mean: slice5(&angle.extras, 1),
                std: slice5(&angle.extras, 2),
            },
            speed_norm: Standardizer {
                mean: slice5(&speed.extras, 1),
                std: slice5(&speed.extras, 2),
            },
            speed_mean: speed.extras[3 * CHANNELS],
            speed_std: speed.extras[3 * CHANNELS + 1],
            angle_net: angle.net,
            speed_net: speed.net,
        })
    }
}

/// Wraps optionally-trained networks; estimating before training is an error.
#[derive(Debug, Clone, Default)]
pub struct WindEstimator {
    models: Option<InverseModels>,
}

impl WindEstimator {
    pub fn untrained() -> Self {
        Self { models: None }
    }

    pub fn new(models: InverseModels) -> Self {
        Self {
            models: Some(models),
        }
    }

    pub fn models(&self) -> Option<&InverseModels> {
        self.models.as_ref()
    }
}

/// Speed from the speed network (floored at zero) and azimuth from the
/// `(sin, cos)` output of the direction network. The azimuth is in the
/// sensor frame.
pub fn estimate_wind(estimator: &WindEstimator, reading: &MastReading) -> Result<WindEstimate> {
    let models = estimator.models.as_ref().ok_or(Error::Untrained)?;
    Ok(models.estimate_batch(&[reading])[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub angle_mean_deg: f64,
    pub angle_p95_deg: f64,
    pub speed_mean: f64,
    pub speed_p95: f64,
    pub n: usize,
}

/// Nearest-rank percentile, `q` in `(0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn evaluate(models: &InverseModels, samples: &[CalibrationSample]) -> ErrorStats {
    let readings: Vec<&MastReading> = samples.iter().map(|s| &s.reading).collect();
    let est = models.estimate_batch(&readings);
    let angle_err: Vec<f64> = est
        .iter()
        .zip(samples)
        .map(|(e, s)| wrap_angle(e.direction - s.angle).abs().to_degrees())
        .collect();
    let speed_err: Vec<f64> = est
        .iter()
        .zip(samples)
        .map(|(e, s)| (e.speed - s.speed).abs())
        .collect();
    let n = samples.len();
    ErrorStats {
        angle_mean_deg: angle_err.iter().sum::<f64>() / n as f64,
        angle_p95_deg: percentile(&angle_err, 0.95),
        speed_mean: speed_err.iter().sum::<f64>() / n as f64,
        speed_p95: percentile(&speed_err, 0.95),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn single_angle_rejected() {
        let config = MastConfig::default();
        let cal = CalibrationConfig {
            n_angles: 1,
            n_test: 10,
            ..CalibrationConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Calibration, 0);
        let set = generate_calibration_set(&config, &cal, &mut rng);
        assert!(matches!(
            train_inverse_models(&set, &cal, &mut rng),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn untrained_estimator_errors() {
        let r = MastReading {
            bridge_voltages: [1.0; CHANNELS],
            t: 0.0,
        };
        assert!(matches!(
            estimate_wind(&WindEstimator::untrained(), &r),
            Err(Error::Untrained)
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v, 1.0), 20.0);
        assert_eq!(percentile(&[3.0], 0.5), 3.0);
    }
}
