//! Plain SVG figures of a comparison: trajectory fans, mean +- std bands and
//! the wind profiles.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::compare::Comparison;
use super::metrics::mean_std;
use super::EpisodeTrace;
use crate::control::ControllerMode;
use crate::error::{Error, Result};

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 50.0;

fn color(mode: ControllerMode) -> &'static str {
    match mode {
        ControllerMode::WindAware => "#1f77b4",
        ControllerMode::WindUnaware => "#2ca02c",
        ControllerMode::Baseline => "#d62728",
    }
}

/// Up to ~6 round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 { 0.0 } else { t });
        t += step;
    }
    out
}

struct Panel {
    top: f64,
    xlim: (f64, f64),
    ylim: (f64, f64),
}

impl Panel {
    fn new(index: usize, xlim: (f64, f64), ylim: (f64, f64)) -> Self {
        let pad = 0.05 * (ylim.1 - ylim.0).max(1e-3);
        Self {
            top: MARGIN_T + index as f64 * (PANEL_H + GAP),
            xlim,
            ylim: (ylim.0 - pad, ylim.1 + pad),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.xlim.0) / (self.xlim.1 - self.xlim.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        self.top + PANEL_H - (y - self.ylim.0) / (self.ylim.1 - self.ylim.0) * PANEL_H
    }

    fn frame(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r) = (MARGIN_L, WIDTH - MARGIN_R);
        let (t, b) = (self.top, self.top + PANEL_H);
        let _ = writeln!(
            svg,
            r##"<rect x="{l}" y="{t}" width="{}" height="{PANEL_H}" fill="none" stroke="#333"/>"##,
            r - l
        );
        let _ = writeln!(svg, r#"<text x="{l}" y="{}" font-size="14">{title}</text>"#, t - 8.0);
        for x in ticks(self.xlim.0, self.xlim.1) {
            let px = self.px(x);
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.1}" y1="{b}" x2="{px:.1}" y2="{}" stroke="#333"/><text x="{px:.1}" y="{}" font-size="11" text-anchor="middle">{x}</text>"##,
                b + 5.0,
                b + 18.0
            );
        }
        for y in ticks(self.ylim.0, self.ylim.1) {
            let py = self.py(y);
            let _ = writeln!(
                svg,
                r##"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"##,
                l - 6.0,
                py + 4.0,
                (y * 1000.0).round() / 1000.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
            (l + r) / 2.0,
            b + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{ylabel}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0
        );
    }

    fn polyline(&self, svg: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str, width: f64, opacity: f64) {
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{:.1},{:.1} ", self.px(x), self.py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
            d.trim_end()
        );
    }

    fn band(&self, svg: &mut String, t: &[f64], lo: &[f64], hi: &[f64], fill: &str) {
        let mut d = String::new();
        for i in 0..t.len() {
            let _ = write!(d, "{:.1},{:.1} ", self.px(t[i]), self.py(hi[i]));
        }
        for i in (0..t.len()).rev() {
            let _ = write!(d, "{:.1},{:.1} ", self.px(t[i]), self.py(lo[i]));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="0.2" stroke="none"/>"#,
            d.trim_end()
        );
    }
}

fn document(panels: usize, body: &str) -> String {
    let height = MARGIN_T + panels as f64 * (PANEL_H + GAP) + 10.0;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn limits<'a>(values: impl Iterator<Item = &'a EpisodeTrace>, f: impl Fn(&EpisodeTrace, usize) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for tr in values {
        for i in 0..tr.records.len() {
            let v = f(tr, i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn time_limits(cmp: &Comparison) -> (f64, f64) {
    let end = cmp
        .traces
        .iter()
        .filter_map(|t| t.records.last())
        .map(|r| r.t)
        .fold(0.0, f64::max);
    (0.0, end.max(1e-3))
}

/// One panel per mode and axis, every trial drawn thin and the mean bold.
fn fan_plot(cmp: &Comparison) -> String {
    let tl = time_limits(cmp);
    let mut body = String::new();
    let mut index = 0;
    for (axis, label) in [(0usize, "x"), (1, "y")] {
        let get = move |tr: &EpisodeTrace, i: usize| tr.records[i].state.r[axis];
        let lim = limits(cmp.traces.iter(), get);
        for &mode in &cmp.modes {
            let p = Panel::new(index, tl, lim);
            index += 1;
            p.frame(&mut body, &format!("{mode}: {label} trajectories"), "t (s)", &format!("{label} (m)"));
            let traces: Vec<&EpisodeTrace> = cmp.traces_for(mode).collect();
            for tr in &traces {
                p.polyline(&mut body, (0..tr.records.len()).map(|i| (tr.records[i].t, get(tr, i))), color(mode), 1.0, 0.35);
            }
            let (t, mean, _) = mean_series(&traces, get);
            p.polyline(&mut body, t.iter().copied().zip(mean), color(mode), 2.5, 1.0);
        }
    }
    document(index, &body)
}

fn mean_series(traces: &[&EpisodeTrace], f: impl Fn(&EpisodeTrace, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let complete: Vec<&&EpisodeTrace> = traces.iter().filter(|t| t.is_complete()).collect();
    let len = complete.iter().map(|t| t.records.len()).min().unwrap_or(0);
    let (mut t, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..len {
        let s = mean_std(&complete.iter().map(|tr| f(tr, i)).collect::<Vec<_>>());
        t.push(complete[0].records[i].t);
        mean.push(s.mean);
        std.push(s.std);
    }
    (t, mean, std)
}

/// Mean +- one standard deviation of x for every mode, over the mean wind.
fn band_plot(cmp: &Comparison) -> String {
    let tl = time_limits(cmp);
    let mut body = String::new();
    let get = |tr: &EpisodeTrace, i: usize| tr.records[i].state.r.x;
    let series: Vec<_> = cmp
        .modes
        .iter()
        .map(|&m| (m, mean_series(&cmp.traces_for(m).collect::<Vec<_>>(), get)))
        .collect();
    let lo = series
        .iter()
        .flat_map(|(_, (_, m, s))| m.iter().zip(s).map(|(a, b)| a - b))
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|(_, (_, m, s))| m.iter().zip(s).map(|(a, b)| a + b))
        .fold(f64::NEG_INFINITY, f64::max);
    let lim = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let p = Panel::new(0, tl, lim);
    p.frame(&mut body, "x: mean and one standard deviation", "t (s)", "x (m)");
    for (i, (mode, (t, mean, std))) in series.iter().enumerate() {
        let lo: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - s).collect();
        let hi: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m + s).collect();
        p.band(&mut body, t, &lo, &hi, color(*mode));
        p.polyline(&mut body, t.iter().copied().zip(mean.iter().copied()), color(*mode), 2.0, 1.0);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{mode}</text>"#,
            MARGIN_L + 10.0,
            MARGIN_T + 16.0 + 15.0 * i as f64,
            color(*mode)
        );
    }
    let wind = |tr: &EpisodeTrace, i: usize| tr.records[i].wind.velocity.x;
    let all: Vec<&EpisodeTrace> = cmp.traces.iter().collect();
    let (t, mean, _) = mean_series(&all, wind);
    let wp = Panel::new(1, tl, limits(cmp.traces.iter(), wind));
    wp.frame(&mut body, "mean true wind", "t (s)", "wind x (m/s)");
    wp.polyline(&mut body, t.iter().copied().zip(mean), "#555", 2.0, 1.0);
    document(2, &body)
}

/// True wind of every trial; identical across modes, so one mode is drawn.
fn wind_plot(cmp: &Comparison) -> String {
    let tl = time_limits(cmp);
    let mut body = String::new();
    let wind = |tr: &EpisodeTrace, i: usize| tr.records[i].wind.velocity.x;
    let first = cmp.modes.first().copied().unwrap_or(ControllerMode::Baseline);
    let traces: Vec<&EpisodeTrace> = cmp.traces_for(first).collect();
    let p = Panel::new(0, tl, limits(traces.iter().copied(), wind));
    p.frame(&mut body, "gust profiles per trial", "t (s)", "wind x (m/s)");
    for tr in traces {
        p.polyline(&mut body, (0..tr.records.len()).map(|i| (tr.records[i].t, wind(tr, i))), "#555", 1.0, 0.6);
    }
    document(1, &body)
}

/// Writes the three figures into `dir` and returns their paths.
pub fn write_svg_figures(cmp: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    let figures = [
        ("trajectories.svg", fan_plot(cmp)),
        ("mean_band.svg", band_plot(cmp)),
        ("wind_profile.svg", wind_plot(cmp)),
    ];
    let mut paths = Vec::new();
    for (name, text) in figures {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
