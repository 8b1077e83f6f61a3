//! `gustlab` command line: `train`, `evaluate` and `sensor-calibrate`.
//!
//! Flags override the config file. Exit status is 0 when every artifact was
//! written, 2 for usage errors and 1 for anything else.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::control::ControllerMode;
use crate::error::{Error, Result};
use crate::experiment::{
    compare_controllers, write_mean_trajectory_csv, write_svg_figures, write_table_csv,
    write_trace_csv, write_trials_csv, Checkpoints,
};
use crate::mast::{evaluate, generate_calibration_set, train_inverse_models};
use crate::policy::{load_actor, save_actor, train, write_curves_csv, TrainSetup};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Parser)]
#[command(name = "gustlab", version, about = "Quadrotor gust-rejection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a residual policy with SAC.
    Train,
    /// Compare controllers on paired hardware-timeline trials.
    Evaluate,
    /// Train the inverse sensor networks and report their errors.
    SensorCalibrate,
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Controller mode to train, or the single mode to evaluate.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ControllerMode>,
    /// Training environment steps, or calibration gradient steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write SVG figures next to the evaluation tables.
    #[arg(long, global = true)]
    pub emit_svg: bool,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

fn resolve(command: &Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &flags.out_dir {
        cfg.output.dir = dir.clone();
    }
    if flags.emit_svg {
        cfg.output.emit_svg = true;
    }
    if let Some(w) = flags.workers {
        if w == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        cfg.train.workers = w;
    }
    if let Some(t) = flags.trials {
        if t == 0 {
            return Err(Error::Usage("--trials must be at least 1".into()));
        }
        cfg.scenario.trials = t;
    }
    match command {
        Command::Train => {
            if let Some(m) = flags.mode {
                cfg.train.mode = m;
            }
            if let Some(s) = flags.steps {
                cfg.sac.total_steps = s;
            }
        }
        Command::Evaluate => {
            if let Some(m) = flags.mode {
                cfg.scenario.modes = vec![m];
            }
        }
        Command::SensorCalibrate => {
            if let Some(s) = flags.steps {
                cfg.calibration.steps = s;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let mode = cfg.train.mode;
    if !mode.has_policy() {
        return Err(Error::Usage(
            "baseline has no trainable policy; use --mode wind-aware or wind-unaware".into(),
        ));
    }
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    cfg.write_snapshot(dir)?;
    let setup = TrainSetup {
        env: cfg.env(),
        gust: cfg.gust.clone(),
        sensor: cfg.sensor_setup()?,
        mode,
        hp: cfg.sac.clone(),
        seed: cfg.seed,
        workers: cfg.train.workers,
    };
    let outcome = train(&setup, |r| {
        println!(
            "step {:>8}  eval return {:>9.3}  eval max|x| {:.3} m  alpha {:.4}",
            r.step, r.eval_return, r.eval_max_x_error, r.alpha
        );
    })?;
    let ckpt = dir.join(format!("{mode}.net"));
    save_actor(&ckpt, &outcome.actor)?;
    let curves = dir.join(format!("{mode}_curves.csv"));
    write_with(&curves, |out| write_curves_csv(out, &outcome.curves))?;
    if let Some(msg) = &outcome.halted {
        eprintln!("training halted early, best checkpoint kept: {msg}");
    }
    println!(
        "best eval return {:.3} (random policy {:.3}); wrote {} and {}",
        outcome.best_eval_return,
        outcome.random_return,
        ckpt.display(),
        curves.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let modes = &cfg.scenario.modes;
    let mut checkpoints = Checkpoints::new();
    for &mode in modes.iter().filter(|m| m.has_policy()) {
        let path = cfg.checkpoint_path(mode);
        if !path.exists() {
            return Err(Error::MissingCheckpoint(format!("{mode} (looked for {})", path.display())));
        }
        checkpoints.insert(mode, load_actor(&path)?);
    }
    let setup = cfg.experiment_setup()?;
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    cfg.write_snapshot(dir)?;
    let cmp = compare_controllers(
        &setup,
        &cfg.scenario_template(),
        modes,
        cfg.scenario.trials,
        &checkpoints,
        cfg.train.workers,
    )?;
    write_with(&dir.join("table.csv"), |o| write_table_csv(o, &cmp))?;
    write_with(&dir.join("trials.csv"), |o| write_trials_csv(o, &cmp))?;
    write_with(&dir.join("mean_trajectory.csv"), |o| write_mean_trajectory_csv(o, &cmp))?;
    let traces = dir.join("traces");
    prepare_dir(&traces)?;
    for t in &cmp.traces {
        let path = traces.join(format!("{}_trial{:03}.csv", t.spec.mode, t.spec.trial));
        write_with(&path, |o| write_trace_csv(o, t))?;
    }
    if cfg.output.emit_svg {
        write_svg_figures(&cmp, dir)?;
    }
    for r in &cmp.reports {
        println!(
            "{:<13} max error {}  mse {}  range {}",
            r.mode.as_str(),
            r.max_error.display(),
            r.mse.display(),
            r.range.display()
        );
    }
    let failed = cmp.trials.iter().filter(|t| t.failed.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} trial(s) ended early; see trials.csv");
    }
    Ok(())
}

fn cmd_sensor_calibrate(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    cfg.write_snapshot(dir)?;
    let mut rng = stream_rng(cfg.seed, Stream::Calibration, 0);
    let set = generate_calibration_set(&cfg.sensor.mast, &cfg.calibration, &mut rng);
    let models = train_inverse_models(&set, &cfg.calibration, &mut rng)?;
    let stats = evaluate(&models, &set.test);
    let models_dir = dir.join("sensor_models");
    models.save(&models_dir)?;
    write_with(&dir.join("sensor_errors.csv"), |o| {
        writeln!(o, "quantity,mean,p95")?;
        writeln!(o, "angle_deg,{},{}", stats.angle_mean_deg, stats.angle_p95_deg)?;
        writeln!(o, "speed_mps,{},{}", stats.speed_mean, stats.speed_p95)
    })?;
    println!(
        "angle error mean {:.3} deg, p95 {:.3} deg; speed error mean {:.4} m/s, p95 {:.4} m/s; models in {}",
        stats.angle_mean_deg,
        stats.angle_p95_deg,
        stats.speed_mean,
        stats.speed_p95,
        models_dir.display()
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(&cli.command, &cli.flags)?;
    match cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::SensorCalibrate => cmd_sensor_calibrate(&cfg),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
