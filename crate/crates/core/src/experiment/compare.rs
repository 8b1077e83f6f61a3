//! Paired-seed comparison of controller modes on the hardware timeline.

use std::collections::HashMap;
use std::io::Write;

use super::metrics::{compute_metrics, mean_std, AxisMetrics, MetricsReport};
use super::{run_episode, EpisodeTrace, ExperimentSetup, ScenarioSpec};
use crate::control::ControllerMode;
use crate::error::{Error, Result};
use crate::policy::Actor;

pub type Checkpoints = HashMap<ControllerMode, Actor<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub mode: ControllerMode,
    pub trial: u64,
    pub metrics: AxisMetrics,
    pub failed: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub modes: Vec<ControllerMode>,
    pub seed: u64,
    /// Mode-major, then trial.
    pub trials: Vec<TrialResult>,
    pub reports: Vec<MetricsReport>,
    /// Same order as `trials`.
    pub traces: Vec<EpisodeTrace>,
}

impl Comparison {
    pub fn report(&self, mode: ControllerMode) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.mode == mode)
    }

    pub fn traces_for(&self, mode: ControllerMode) -> impl Iterator<Item = &EpisodeTrace> {
        self.traces.iter().filter(move |t| t.spec.mode == mode)
    }
}

/// Runs `trials` episodes of `template` for each mode, overriding its mode and
/// trial index. Trial `k` uses the same gust and sensor noise streams in
/// every mode. With `workers > 1` the episodes are spread over threads;
/// results do not depend on the count.
pub fn compare_controllers(
    setup: &ExperimentSetup,
    template: &ScenarioSpec,
    modes: &[ControllerMode],
    trials: usize,
    checkpoints: &Checkpoints,
    workers: usize,
) -> Result<Comparison> {
    let seed = template.seed;
    if trials == 0 {
        return Err(Error::Usage("trials must be at least 1".into()));
    }
    if workers == 0 {
        return Err(Error::Usage("workers must be at least 1".into()));
    }
    for m in modes {
        if m.has_policy() && !checkpoints.contains_key(m) {
            return Err(Error::MissingCheckpoint(m.to_string()));
        }
    }
    let jobs: Vec<ScenarioSpec> = modes
        .iter()
        .flat_map(|&mode| {
            (0..trials as u64).map(move |trial| ScenarioSpec {
                mode,
                trial,
                ..template.clone()
            })
        })
        .collect();
    let run = |spec: &ScenarioSpec| {
        let policy = if spec.mode.has_policy() {
            checkpoints.get(&spec.mode)
        } else {
            None
        };
        run_episode(setup, spec, policy)
    };
    let traces: Vec<EpisodeTrace> = if workers == 1 {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(jobs.len());
            for h in handles {
                out.extend(h.join().expect("trial thread panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    };

    let mut results = Vec::with_capacity(traces.len());
    for trace in &traces {
        results.push(TrialResult {
            mode: trace.spec.mode,
            trial: trace.spec.trial,
            metrics: compute_metrics(trace)?,
            failed: trace.failed.clone(),
        });
    }
    let reports = modes
        .iter()
        .map(|&m| {
            let rows = results.iter().filter(|r| r.mode == m).map(|r| r.metrics).collect();
            MetricsReport::new(m, rows)
        })
        .collect();
    Ok(Comparison {
        modes: modes.to_vec(),
        seed,
        trials: results,
        reports,
        traces,
    })
}

/// Metric rows by controller columns, each cell `mean (std)`.
pub fn write_table_csv<W: Write>(out: &mut W, cmp: &Comparison) -> std::io::Result<()> {
    let names: Vec<&str> = cmp.modes.iter().map(|m| m.as_str()).collect();
    writeln!(out, "metric,{}", names.join(","))?;
    let rows: [(&str, fn(&MetricsReport) -> String); 3] = [
        ("max_error_m", |r| r.max_error.display()),
        ("mse_m2", |r| r.mse.display()),
        ("range_m", |r| r.range.display()),
    ];
    for (name, cell) in rows {
        let cells: Vec<String> = cmp.reports.iter().map(cell).collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_trials_csv<W: Write>(out: &mut W, cmp: &Comparison) -> std::io::Result<()> {
    writeln!(out, "mode,trial,seed,max_error_m,mse_m2,range_m,failed")?;
    for r in &cmp.trials {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mode,
            r.trial,
            cmp.seed,
            r.metrics.max_error,
            r.metrics.mse,
            r.metrics.range,
            r.failed.is_some()
        )?;
    }
    Ok(())
}

/// Per-mode mean and standard deviation of x and y at each control step,
/// plus the trial-averaged true wind. Gust onsets coincide in simulation, so
/// no time shift is applied. Failed trials are left out.
pub fn write_mean_trajectory_csv<W: Write>(out: &mut W, cmp: &Comparison) -> std::io::Result<()> {
    let per_mode: Vec<Vec<&EpisodeTrace>> = cmp
        .modes
        .iter()
        .map(|&m| cmp.traces_for(m).filter(|t| t.is_complete()).collect())
        .collect();
    let len = per_mode
        .iter()
        .flatten()
        .map(|t| t.records.len())
        .min()
        .unwrap_or(0);
    let mut header = vec!["t".to_string()];
    for m in &cmp.modes {
        for col in ["x_mean", "x_std", "y_mean", "y_std"] {
            header.push(format!("{m}_{col}"));
        }
    }
    header.push("wind_x_mean".into());
    writeln!(out, "{}", header.join(","))?;
    let reference = per_mode.iter().flatten().next();
    for i in 0..len {
        let mut row = vec![reference.map_or(0.0, |t| t.records[i].t)];
        for traces in &per_mode {
            let xs: Vec<f64> = traces.iter().map(|t| t.records[i].state.r.x).collect();
            let ys: Vec<f64> = traces.iter().map(|t| t.records[i].state.r.y).collect();
            let (sx, sy) = (mean_std(&xs), mean_std(&ys));
            row.extend([sx.mean, sx.std, sy.mean, sy.std]);
        }
        let winds: Vec<f64> = per_mode
            .iter()
            .flatten()
            .map(|t| t.records[i].wind.velocity.x)
            .collect();
        row.push(mean_std(&winds).mean);
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
