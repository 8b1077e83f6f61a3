//! Position-error metrics on the X axis.

use serde::Serialize;

use super::EpisodeTrace;
use crate::control::ControllerMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisMetrics {
    /// max |x - x_sp|, m
    pub max_error: f64,
    /// mean (x - x_sp)^2, m^2
    pub mse: f64,
    /// max x - min x, m
    pub range: f64,
}

pub fn axis_metrics(values: &[f64], setpoint: f64) -> Result<AxisMetrics> {
    if values.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut max_error: f64 = 0.0;
    let mut sq = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in values {
        let e = x - setpoint;
        max_error = max_error.max(e.abs());
        sq += e * e;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok(AxisMetrics {
        max_error,
        mse: sq / values.len() as f64,
        range: hi - lo,
    })
}

/// Metrics of the X trajectory against the X setpoint.
pub fn compute_metrics(trace: &EpisodeTrace) -> Result<AxisMetrics> {
    let first = trace.records.first().ok_or(Error::EmptyTrace)?;
    let xs: Vec<f64> = trace.records.iter().map(|r| r.state.r.x).collect();
    axis_metrics(&xs, first.setpoints.r_sp.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    /// `mean (std)` with three decimals.
    pub fn display(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.std)
    }
}

pub fn mean_std(xs: &[f64]) -> Stat {
    let n = xs.len();
    if n == 0 {
        return Stat { mean: f64::NAN, std: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Stat { mean, std }
}

/// Per-trial metrics of one controller with their mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mode: ControllerMode,
    pub trials: Vec<AxisMetrics>,
    pub max_error: Stat,
    pub mse: Stat,
    pub range: Stat,
}

impl MetricsReport {
    pub fn new(mode: ControllerMode, trials: Vec<AxisMetrics>) -> Self {
        let col = |f: fn(&AxisMetrics) -> f64| mean_std(&trials.iter().map(f).collect::<Vec<_>>());
        Self {
            mode,
            max_error: col(|m| m.max_error),
            mse: col(|m| m.mse),
            range: col(|m| m.range),
            trials,
        }
    }
}
