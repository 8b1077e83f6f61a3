//! Gust schedules and aerodynamic drag.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::DroneState;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Three-stage gust: `Low`, a linear `Slope` up to `High`, and a raised-cosine
/// dip somewhere inside `High`. After `High` the speed ramps back to `u_low`
/// over another `slope_duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GustProfile {
    pub u_low: f64,
    pub u_high: f64,
    pub t_start_slope: f64,
    pub slope_duration: f64,
    pub high_duration: f64,
    pub dip_depth: f64,
    pub dip_time: f64,
    pub dip_width: f64,
    #[serde(default = "default_direction")]
    pub direction: Vector3<f64>,
}

fn default_direction() -> Vector3<f64> {
    Vector3::x()
}

impl GustProfile {
    /// A profile that is zero everywhere.
    pub fn calm() -> Self {
        Self {
            u_low: 0.0,
            u_high: 0.0,
            t_start_slope: f64::INFINITY,
            slope_duration: 1.0,
            high_duration: 0.0,
            dip_depth: 0.0,
            dip_time: f64::INFINITY,
            dip_width: 0.0,
            direction: Vector3::x(),
        }
    }

    pub fn high_start(&self) -> f64 {
        self.t_start_slope + self.slope_duration
    }

    pub fn high_end(&self) -> f64 {
        self.high_start() + self.high_duration
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("gust profile: {m}")));
        if !(0.0 <= self.u_low && self.u_low < self.u_high) {
            return bad(format!("need 0 <= u_low < u_high, got {} / {}", self.u_low, self.u_high));
        }
        if !(self.slope_duration > 0.0) {
            return bad("slope_duration must be > 0".into());
        }
        if !(self.high_start() <= self.dip_time && self.dip_time <= self.high_end()) {
            return bad(format!(
                "dip_time {} outside High stage [{}, {}]",
                self.dip_time,
                self.high_start(),
                self.high_end()
            ));
        }
        if self.u_high - self.dip_depth < 0.0 || self.dip_depth < 0.0 || self.dip_width < 0.0 {
            return bad("dip must satisfy 0 <= dip_depth <= u_high, dip_width >= 0".into());
        }
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return bad("direction must be a unit vector".into());
        }
        Ok(())
    }

    fn base_speed(&self, t: f64) -> f64 {
        let high_start = self.high_start();
        let high_end = self.high_end();
        let du = self.u_high - self.u_low;
        if t < self.t_start_slope {
            self.u_low
        } else if t < high_start {
            self.u_low + du * (t - self.t_start_slope) / self.slope_duration
        } else if t <= high_end {
            self.u_high
        } else if t < high_end + self.slope_duration {
            self.u_high - du * (t - high_end) / self.slope_duration
        } else {
            self.u_low
        }
    }

    fn dip(&self, t: f64) -> f64 {
        let offset = t - self.dip_time;
        if self.dip_width <= 0.0 || offset.abs() >= 0.5 * self.dip_width {
            return 0.0;
        }
        self.dip_depth * 0.5 * (1.0 + (2.0 * PI * offset / self.dip_width).cos())
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        (self.base_speed(t) - self.dip(t)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSample {
    pub velocity: Vector3<f64>,
    pub t: f64,
}

pub fn wind_at(profile: &GustProfile, t: f64) -> WindSample {
    WindSample {
        velocity: profile.direction * profile.speed_at(t),
        t,
    }
}

/// Closed interval for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(value: f64) -> Self {
        Self::new(value, value)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!(
                "gust range {name}: min {} > max {} or non-finite",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Randomization bounds for [`sample_gust_profile`]. `dip_time` is absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GustRanges {
    pub u_low: Range,
    pub u_high: Range,
    pub t_start_slope: Range,
    pub slope_duration: Range,
    pub high_duration: Range,
    pub dip_depth: Range,
    pub dip_time: Range,
    pub dip_width: Range,
}

impl Default for GustRanges {
    fn default() -> Self {
        Self {
            u_low: Range::new(0.0, 0.5),
            u_high: Range::new(3.5, 6.0),
            t_start_slope: Range::new(1.0, 3.0),
            slope_duration: Range::new(0.3, 1.5),
            high_duration: Range::new(4.0, 6.0),
            dip_depth: Range::new(0.0, 1.5),
            dip_time: Range::new(1.3, 10.5),
            dip_width: Range::new(0.2, 0.6),
        }
    }
}

impl GustRanges {
    /// Every range collapsed to the given profile.
    pub fn degenerate(p: &GustProfile) -> Self {
        Self {
            u_low: Range::fixed(p.u_low),
            u_high: Range::fixed(p.u_high),
            t_start_slope: Range::fixed(p.t_start_slope),
            slope_duration: Range::fixed(p.slope_duration),
            high_duration: Range::fixed(p.high_duration),
            dip_depth: Range::fixed(p.dip_depth),
            dip_time: Range::fixed(p.dip_time),
            dip_width: Range::fixed(p.dip_width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("u_low", &self.u_low),
            ("u_high", &self.u_high),
            ("t_start_slope", &self.t_start_slope),
            ("slope_duration", &self.slope_duration),
            ("high_duration", &self.high_duration),
            ("dip_depth", &self.dip_depth),
            ("dip_time", &self.dip_time),
            ("dip_width", &self.dip_width),
        ] {
            r.check(name)?;
        }
        if self.u_low.min < 0.0 {
            return Err(Error::Config("u_low range must be non-negative".into()));
        }
        if self.u_low.min >= self.u_high.max {
            return Err(Error::Config(format!(
                "u_low range [{}, {}] never below u_high range [{}, {}]",
                self.u_low.min, self.u_low.max, self.u_high.min, self.u_high.max
            )));
        }
        if self.slope_duration.max <= 0.0 {
            return Err(Error::Config("slope_duration range must allow > 0".into()));
        }
        if self.dip_depth.min > self.u_high.max || self.dip_depth.min < 0.0 {
            return Err(Error::Config("dip_depth range incompatible with u_high".into()));
        }
        let earliest_high = self.t_start_slope.min + self.slope_duration.min;
        let latest_high_end = self.t_start_slope.max + self.slope_duration.max + self.high_duration.max;
        if self.dip_time.max < earliest_high || self.dip_time.min > latest_high_end {
            return Err(Error::Config("dip_time range never inside the High stage".into()));
        }
        Ok(())
    }
}

const MAX_DRAWS: usize = 10_000;

/// Draws a profile with every field uniform in its range. Pairs that break
/// the profile invariants are redrawn; `dip_time` is redrawn until it falls
/// inside the High stage.
pub fn sample_gust_profile(rng: &mut SimRng, ranges: &GustRanges) -> Result<GustProfile> {
    ranges.validate()?;
    for _ in 0..MAX_DRAWS {
        let u_low = ranges.u_low.sample(rng);
        let u_high = ranges.u_high.sample(rng);
        let t_start_slope = ranges.t_start_slope.sample(rng);
        let slope_duration = ranges.slope_duration.sample(rng);
        let high_duration = ranges.high_duration.sample(rng);
        let dip_depth = ranges.dip_depth.sample(rng);
        let dip_width = ranges.dip_width.sample(rng);
        if !(u_low < u_high && slope_duration > 0.0 && dip_depth <= u_high) {
            continue;
        }
        let high_start = t_start_slope + slope_duration;
        let high_end = high_start + high_duration;
        let lo = ranges.dip_time.min.max(high_start);
        let hi = ranges.dip_time.max.min(high_end);
        if lo > hi {
            continue;
        }
        let mut dip_time = None;
        for _ in 0..MAX_DRAWS {
            let t = ranges.dip_time.sample(rng);
            if (high_start..=high_end).contains(&t) {
                dip_time = Some(t);
                break;
            }
        }
        let Some(dip_time) = dip_time else { continue };
        let profile = GustProfile {
            u_low,
            u_high,
            t_start_slope,
            slope_duration,
            high_duration,
            dip_depth,
            dip_time,
            dip_width,
            direction: Vector3::x(),
        };
        debug_assert!(profile.validate().is_ok());
        return Ok(profile);
    }
    Err(Error::Config(
        "gust ranges produced no valid profile after repeated draws".into(),
    ))
}

/// Writes `t,speed` rows sampled every `dt` over `[0, duration]`.
pub fn write_profile_csv<W: Write>(
    out: &mut W,
    profile: &GustProfile,
    duration: f64,
    dt: f64,
) -> std::io::Result<()> {
    writeln!(out, "t,speed")?;
    let n = (duration / dt).round() as usize;
    for i in 0..=n {
        let t = i as f64 * dt;
        writeln!(out, "{},{}", t, profile.speed_at(t))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DragParams {
    pub air_density: f64,
    /// Frontal area per body axis, m^2.
    pub bluff_area: Vector3<f64>,
    pub bluff_drag_coeff: Vector3<f64>,
    /// N per m/s of relative wind.
    pub induced_drag_coeff: f64,
}

impl Default for DragParams {
    fn default() -> Self {
        Self {
            air_density: 1.225,
            bluff_area: Vector3::new(0.05, 0.05, 0.08),
            bluff_drag_coeff: Vector3::new(1.0, 1.0, 1.0),
            induced_drag_coeff: 0.05,
        }
    }
}

impl DragParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.air_density >= 0.0
            && self.induced_drag_coeff >= 0.0
            && self.bluff_area.iter().all(|a| *a >= 0.0)
            && self.bluff_drag_coeff.iter().all(|c| *c >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("drag parameters must be non-negative".into()))
        }
    }

    /// Drag on the airframe for a body-frame relative airflow, body frame.
    pub fn body_force(&self, v_rel_body: &Vector3<f64>) -> Vector3<f64> {
        let bluff = Vector3::from_fn(|i, _| {
            0.5 * self.air_density
                * self.bluff_drag_coeff[i]
                * self.bluff_area[i]
                * v_rel_body[i].abs()
                * v_rel_body[i]
        });
        bluff + v_rel_body * self.induced_drag_coeff
    }
}

/// Body-frame relative airflow seen by a vehicle in `state`.
pub fn relative_wind_body(wind: &WindSample, state: &DroneState) -> Vector3<f64> {
    state.q.inverse_transform_vector(&(wind.velocity - state.v))
}

/// World-frame drag force.
pub fn drag_force(dp: &DragParams, wind: &WindSample, state: &DroneState) -> Vector3<f64> {
    state.q * dp.body_force(&relative_wind_body(wind, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn example_profile() -> GustProfile {
        GustProfile {
            u_low: 0.4,
            u_high: 5.0,
            t_start_slope: 2.0,
            slope_duration: 1.0,
            high_duration: 5.0,
            dip_depth: 1.2,
            dip_time: 5.5,
            dip_width: 0.5,
            direction: Vector3::x(),
        }
    }

    #[test]
    fn stage_values() {
        let p = example_profile();
        assert_eq!(p.speed_at(0.0), 0.4);
        assert_relative_eq!(p.speed_at(2.5), 2.7, epsilon = 1e-15);
        assert_relative_eq!(p.speed_at(5.5), 5.0 - 1.2, epsilon = 1e-15);
        assert_eq!(p.speed_at(4.0), 5.0);
        assert_eq!(p.speed_at(20.0), 0.4);
        let w = wind_at(&p, 4.0);
        assert_eq!(w.velocity, Vector3::new(5.0, 0.0, 0.0));
    }

    #[test]
    fn continuous_everywhere() {
        let p = example_profile();
        let dt = 1e-4;
        let mut prev = p.speed_at(0.0);
        let mut max_jump: f64 = 0.0;
        for i in 1..=150_000 {
            let s = p.speed_at(i as f64 * dt);
            max_jump = max_jump.max((s - prev).abs());
            prev = s;
        }
        assert!(max_jump < p.u_high * 1e-3, "jump {max_jump}");
    }

    #[test]
    fn degenerate_ranges_reproduce_profile() {
        let p = example_profile();
        let mut rng = stream_rng(1, Stream::Gust, 0);
        let q = sample_gust_profile(&mut rng, &GustRanges::degenerate(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn same_seed_same_profile() {
        let r = GustRanges::default();
        let a = sample_gust_profile(&mut stream_rng(9, Stream::Gust, 2), &r).unwrap();
        let b = sample_gust_profile(&mut stream_rng(9, Stream::Gust, 2), &r).unwrap();
        let c = sample_gust_profile(&mut stream_rng(9, Stream::Gust, 3), &r).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn default_ranges_monte_carlo() {
        let r = GustRanges::default();
        let mut rng = stream_rng(11, Stream::Gust, 0);
        let n = 10_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let p = sample_gust_profile(&mut rng, &r).unwrap();
            p.validate().unwrap();
            sums[0] += p.u_low;
            sums[1] += p.u_high;
            sums[2] += p.slope_duration;
            sums[3] += p.high_duration;
        }
        let ranges = [r.u_low, r.u_high, r.slope_duration, r.high_duration];
        for (sum, range) in sums.iter().zip(ranges) {
            let mean = sum / n as f64;
            assert!(
                (mean - range.midpoint()).abs() <= 0.02 * range.midpoint(),
                "mean {mean} vs midpoint {}",
                range.midpoint()
            );
        }
    }

    #[test]
    fn impossible_ranges_are_config_errors() {
        let r = GustRanges {
            u_low: Range::new(7.0, 8.0),
            ..GustRanges::default()
        };
        assert!(matches!(
            sample_gust_profile(&mut stream_rng(0, Stream::Gust, 0), &r),
            Err(Error::Config(_))
        ));
        let r = GustRanges {
            dip_time: Range::new(50.0, 60.0),
            ..GustRanges::default()
        };
        assert!(sample_gust_profile(&mut stream_rng(0, Stream::Gust, 0), &r).is_err());
    }

    fn example_drag() -> DragParams {
        DragParams {
            air_density: 1.225,
            bluff_area: Vector3::new(0.05, 0.05, 0.08),
            bluff_drag_coeff: Vector3::repeat(1.0),
            induced_drag_coeff: 0.05,
        }
    }

    #[test]
    fn drag_hand_value() {
        let state = DroneState::at_rest(Vector3::zeros());
        let wind = WindSample {
            velocity: Vector3::new(5.0, 0.0, 0.0),
            t: 0.0,
        };
        let f = drag_force(&example_drag(), &wind, &state);
        // 0.5 * 1.225 * 1.0 * 0.05 * 25 + 0.05 * 5
        assert_relative_eq!(f.x, 1.015625, epsilon = 1e-12);
        assert_eq!(f.y, 0.0);
        assert_eq!(f.z, 0.0);
    }

    #[test]
    fn no_relative_flow_no_force() {
        let mut state = DroneState::at_rest(Vector3::zeros());
        state.v = Vector3::new(1.0, -2.0, 0.5);
        state.q = UnitQuaternion::from_euler_angles(0.2, 0.1, 1.0);
        let wind = WindSample {
            velocity: state.v,
            t: 0.0,
        };
        assert!(drag_force(&example_drag(), &wind, &state).norm() < 1e-15);
    }

    #[test]
    fn drag_term_homogeneity() {
        let dp = example_drag();
        let v = Vector3::new(1.3, -0.7, 0.4);
        let linear = |v: &Vector3<f64>| v * dp.induced_drag_coeff;
        let bluff = |v: &Vector3<f64>| dp.body_force(v) - linear(v);
        assert_relative_eq!(bluff(&(v * 2.0)), bluff(&v) * 4.0, max_relative = 1e-12);
        assert_relative_eq!(linear(&(v * 2.0)), linear(&v) * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn drag_is_odd() {
        let dp = example_drag();
        let v = Vector3::new(3.0, -1.1, 0.2);
        assert_eq!(dp.body_force(&-v), -dp.body_force(&v));
    }

    #[test]
    fn profile_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &example_profile(), 1.0, 0.5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,speed\n0,0.4\n0.5,0.4\n1,0.4\n");
    }
}
