//! Acceptance criteria, run in order, one `PASS`/`FAIL` line each.
//!
//! Criteria 5 and 6 need two 200k-step SAC runs (about an hour each on one
//! core). The resulting checkpoints are cached under the cargo test temp
//! directory, keyed by a hash of the full training setup; delete
//! `target/tmp/acceptance` to force retraining.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use gustlab::control::ControllerMode;
use gustlab::env::{EnvConfig, GustEnv, SensorSetup};
use gustlab::experiment::{
    compare_controllers, run_episode, write_trace_csv, Checkpoints,
    ExperimentSetup, GustSchedule, ScenarioSpec,
};
use gustlab::mast::{
    evaluate, generate_calibration_set, rolling_max_filter, train_inverse_models,
    CalibrationConfig, MastConfig, RollingMax,
};
use gustlab::policy::{
    evaluate_policy, gaussian_noise, load_actor, save_actor, train, write_curves_csv, Actor,
    Batch, EvalPolicy, Sac, SacHyperparams, TrainSetup,
};
use gustlab::rng::{stream_rng, Stream};
use gustlab::wind::GustRanges;

const TRAIN_SEED: u64 = 0;
/// Root seed of the held-out hardware-timeline trials.
const EVAL_SEED: u64 = 0;
const PAIRED_TRIALS: usize = 20;

struct Outcome {
    hard_failures: Vec<u32>,
}

impl Outcome {
    fn line(&mut self, n: u32, name: &str, pass: bool, hard: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let soft = if hard { "" } else { " [soft]" };
        // written past the test harness capture so the lines always show
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{tag} criterion {n}{soft}: {name}: {detail}");
        let _ = out.flush();
        if hard && !pass {
            self.hard_failures.push(n);
        }
    }
}

fn elapsed(t: Instant) -> String {
    format!("{:.1} s", t.elapsed().as_secs_f64())
}

fn hover_stability(o: &mut Outcome) {
    let t0 = Instant::now();
    let setup = ExperimentSetup::default();
    let mut worst: f64 = 0.0;
    let mut passing = 0;
    for seed in 0..20 {
        let mut spec = ScenarioSpec::training_episode(ControllerMode::Baseline, seed, 0, &setup.env)
            .with_gust(GustSchedule::Calm);
        spec.duration = 6.0;
        let trace = run_episode(&setup, &spec, None).unwrap();
        let sp = trace.records[0].setpoints.r_sp;
        let err = trace
            .records
            .iter()
            .filter(|r| r.t >= 3.0 - 1e-9)
            .map(|r| (r.state.r - sp).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        if trace.is_complete() && err < 0.05 {
            passing += 1;
        }
    }
    o.line(
        1,
        "hover stability",
        passing == 20,
        true,
        format!("{passing}/20 seeds below 5 cm from t = 3 s on, worst {:.4} m ({})", worst, elapsed(t0)),
    );
}

fn sensor_round_trip(o: &mut Outcome) {
    let t0 = Instant::now();
    let cal = CalibrationConfig::default();
    let run = |config: MastConfig| {
        let mut rng = stream_rng(0, Stream::Calibration, 0);
        let set = generate_calibration_set(&config, &cal, &mut rng);
        let models = train_inverse_models(&set, &cal, &mut rng).unwrap();
        evaluate(&models, &set.test)
    };
    let clean = run(MastConfig::default().noiseless());
    let noisy = run(MastConfig::default());
    let pass = clean.angle_mean_deg <= 1.6
        && clean.speed_mean <= 0.14
        && noisy.angle_p95_deg <= 5.0
        && noisy.speed_p95 <= 0.36;
    o.line(
        2,
        "sensor round trip",
        pass,
        true,
        format!(
            "noiseless mean {:.3} deg / {:.4} m/s (<= 1.6 / 0.14); noisy p95 {:.3} deg / {:.4} m/s (<= 5.0 / 0.36) ({})",
            clean.angle_mean_deg,
            clean.speed_mean,
            noisy.angle_p95_deg,
            noisy.speed_p95,
            elapsed(t0)
        ),
    );
}

fn filter_oracle(o: &mut Outcome) {
    let t0 = Instant::now();
    let window = 0.1;
    let mut rng = stream_rng(3, Stream::Exploration, 0);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for _ in 0..10_000 {
        let n = rng.random_range(1..120);
        let mut t = 0.0;
        let mut series = Vec::with_capacity(n);
        for _ in 0..n {
            // repeated timestamps and gaps longer than the window both occur
            t += match rng.random_range(0..10) {
                0 => 0.0,
                1 => rng.random_range(0.1..0.3),
                _ => rng.random_range(0.0..0.02),
            };
            series.push((t, rng.random_range(-5.0..5.0)));
        }
        let mut streaming = RollingMax::new(window);
        for i in 0..n {
            let (ti, vi) = series[i];
            let mut brute = f64::NEG_INFINITY;
            for &(tj, vj) in &series[..=i] {
                if tj > ti - window && vj > brute {
                    brute = vj;
                }
            }
            let batch = rolling_max_filter(&series[..=i], window).unwrap();
            let online = streaming.push(ti, vi);
            checked += 1;
            if batch != brute || online != brute {
                mismatches += 1;
            }
        }
    }
    o.line(
        3,
        "filter oracle",
        mismatches == 0,
        true,
        format!("{mismatches} mismatches in {checked} windows over 10^4 series ({})", elapsed(t0)),
    );
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn gradient_oracle(o: &mut Outcome) {
    let t0 = Instant::now();
    let hp = SacHyperparams {
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        initial_alpha: 0.2,
        ..SacHyperparams::default()
    };
    let mut rng = stream_rng(4, Stream::NetInit, 0);
    let mut sac = Sac::<f64>::new(4, 4, hp, &mut rng);
    sac.actor.log_std = Array1::from(vec![-0.3, -0.7, 0.1, -1.2]);
    for layer in &mut sac.actor.net.layers {
        layer.w.mapv_inplace(|w| 20.0 * w);
    }
    let b = 5;
    let batch = Batch {
        obs: Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0)),
        actions: Array2::from_shape_fn((b, 4), |_| rng.random_range(-0.9..0.9)),
        rewards: Array1::from_shape_fn(b, |_| rng.random_range(-1.0..0.0)),
        next_obs: Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0)),
        dones: Array1::from_shape_fn(b, |i| if i == 1 { 1.0 } else { 0.0 }),
    };
    let h = 1e-6;
    let central = |up: f64, down: f64| (up - down) / (2.0 * h);

    let y = sac.td_targets(&batch, gaussian_noise(b, 4, &mut rng));
    let (_, cg) = sac.critic_loss(&batch, &y);
    let mut critic_worst: f64 = 0.0;
    for k in 0..2 {
        let analytic: Vec<Vec<f64>> = cg[k].tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, grad) in analytic.iter().enumerate() {
            for (i, &g) in grad.iter().enumerate() {
                sac.critics[k].tensors_mut()[ti][i] += h;
                let up = sac.critic_loss(&batch, &y).0;
                sac.critics[k].tensors_mut()[ti][i] -= 2.0 * h;
                let down = sac.critic_loss(&batch, &y).0;
                sac.critics[k].tensors_mut()[ti][i] += h;
                critic_worst = critic_worst.max(rel_err(g, central(up, down)));
            }
        }
    }

    let eps: Array2<f64> = gaussian_noise(b, 4, &mut rng);
    let ag = sac.actor_loss(batch.obs.view(), eps.clone());
    let mut actor_worst: f64 = 0.0;
    let analytic: Vec<Vec<f64>> = ag.net.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, grad) in analytic.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            sac.actor.net.tensors_mut()[ti][i] += h;
            let up = sac.actor_loss(batch.obs.view(), eps.clone()).loss;
            sac.actor.net.tensors_mut()[ti][i] -= 2.0 * h;
            let down = sac.actor_loss(batch.obs.view(), eps.clone()).loss;
            sac.actor.net.tensors_mut()[ti][i] += h;
            actor_worst = actor_worst.max(rel_err(g, central(up, down)));
        }
    }
    for j in 0..4 {
        sac.actor.log_std[j] += h;
        let up = sac.actor_loss(batch.obs.view(), eps.clone()).loss;
        sac.actor.log_std[j] -= 2.0 * h;
        let down = sac.actor_loss(batch.obs.view(), eps.clone()).loss;
        sac.actor.log_std[j] += h;
        actor_worst = actor_worst.max(rel_err(ag.log_std[j], central(up, down)));
    }

    let lp = ag.log_prob_mean;
    let (_, g_alpha) = sac.alpha_loss(lp);
    sac.log_alpha += h;
    let up = sac.alpha_loss(lp).0;
    sac.log_alpha -= 2.0 * h;
    let down = sac.alpha_loss(lp).0;
    sac.log_alpha += h;
    let alpha_err = rel_err(g_alpha, central(up, down));

    let worst = critic_worst.max(actor_worst).max(alpha_err);
    o.line(
        4,
        "gradient oracle",
        worst < 1e-4,
        true,
        format!(
            "max relative error critic {critic_worst:.2e}, actor {actor_worst:.2e}, temperature {alpha_err:.2e} (< 1e-4) ({})",
            elapsed(t0)
        ),
    );
}

fn desk_setup(mode: ControllerMode) -> TrainSetup {
    TrainSetup {
        env: EnvConfig::default(),
        gust: GustRanges::default(),
        sensor: SensorSetup::Ideal,
        mode,
        hp: SacHyperparams::default(),
        seed: TRAIN_SEED,
        workers: 1,
    }
}

/// Trains at desk scale or loads the cached result of the identical setup.
fn desk_policy(mode: ControllerMode) -> Actor<f64> {
    let setup = desk_setup(mode);
    let mut hasher = DefaultHasher::new();
    format!("{setup:?}").hash(&mut hasher);
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(format!("{mode}-{:016x}.net", hasher.finish()));
    if path.exists() {
        return load_actor(&path).unwrap();
    }
    let t0 = Instant::now();
    let outcome = train(&setup, |r| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "  [{mode} training] step {:>6}  eval return {:>8.2}  eval max|x| {:.3} m  ({})",
            r.step,
            r.eval_return,
            r.eval_max_x_error,
            elapsed(t0)
        );
    })
    .unwrap();
    assert!(outcome.halted.is_none(), "training halted: {:?}", outcome.halted);
    let curves = path.with_extension("csv");
    write_curves_csv(&mut std::fs::File::create(curves).unwrap(), &outcome.curves).unwrap();
    save_actor(&path, &outcome.actor).unwrap();
    outcome.actor
}

fn desk_scale_learning(o: &mut Outcome, aware: &Actor<f64>) {
    let t0 = Instant::now();
    let setup = ExperimentSetup::default();
    let mut ckpt = Checkpoints::new();
    ckpt.insert(ControllerMode::WindAware, aware.clone());
    let template = ScenarioSpec::hardware_timeline(ControllerMode::Baseline, EVAL_SEED, 0);
    let cmp = compare_controllers(
        &setup,
        &template,
        &[ControllerMode::WindAware, ControllerMode::Baseline],
        PAIRED_TRIALS,
        &ckpt,
        1,
    )
    .unwrap();
    let wa = cmp.report(ControllerMode::WindAware).unwrap().max_error;
    let base = cmp.report(ControllerMode::Baseline).unwrap().max_error;
    let improvement = 1.0 - wa.mean / base.mean;
    let failed = cmp.trials.iter().filter(|t| t.failed.is_some()).count();
    o.line(
        5,
        "desk-scale learning",
        improvement >= 0.2 && failed == 0,
        true,
        format!(
            "mean max X error over {PAIRED_TRIALS} paired gusts: wind-aware {} m vs baseline {} m, improvement {:.1}% (>= 20%), {failed} failed trials ({})",
            wa.display(),
            base.display(),
            100.0 * improvement,
            elapsed(t0)
        ),
    );

    // the policy module's desk-scale example: mean return on held-out
    // training-style episodes
    let episodes = PAIRED_TRIALS;
    let held_out_seed = 1_000 + TRAIN_SEED;
    let env_cfg = EnvConfig::default();
    let mut env = GustEnv::new(env_cfg.clone(), ControllerMode::WindAware, SensorSetup::Ideal.build()).unwrap();
    let actor32 = aware.cast::<f32>();
    let policy = evaluate_policy(&mut env, &GustRanges::default(), held_out_seed, episodes, EvalPolicy::Actor(&actor32)).unwrap();
    let mut env = GustEnv::new(env_cfg, ControllerMode::Baseline, SensorSetup::Ideal.build()).unwrap();
    let baseline = evaluate_policy(&mut env, &GustRanges::default(), held_out_seed, episodes, EvalPolicy::Zero).unwrap();
    let pass = policy.mean_return > baseline.mean_return;
    o.line(
        5,
        "desk-scale return",
        pass,
        true,
        format!(
            "mean return on {episodes} held-out episodes: wind-aware {:.2} vs baseline {:.2}",
            policy.mean_return, baseline.mean_return
        ),
    );
}

fn ordering(o: &mut Outcome, aware: &Actor<f64>, unaware: &Actor<f64>) {
    let t0 = Instant::now();
    let setup = ExperimentSetup::default();
    let mut ckpt = Checkpoints::new();
    ckpt.insert(ControllerMode::WindAware, aware.clone());
    ckpt.insert(ControllerMode::WindUnaware, unaware.clone());
    let template = ScenarioSpec::hardware_timeline(ControllerMode::Baseline, EVAL_SEED, 0);
    let modes = [ControllerMode::WindAware, ControllerMode::WindUnaware];
    let cmp = compare_controllers(&setup, &template, &modes, PAIRED_TRIALS, &ckpt, 1).unwrap();
    let per_mode = |m: ControllerMode| -> Vec<f64> {
        cmp.trials.iter().filter(|t| t.mode == m).map(|t| t.metrics.max_error).collect()
    };
    let (a, u) = (per_mode(ControllerMode::WindAware), per_mode(ControllerMode::WindUnaware));
    let wins = a.iter().zip(&u).filter(|(x, y)| x <= y).count();
    let frac = wins as f64 / PAIRED_TRIALS as f64;
    o.line(
        6,
        "ordering wind-aware <= wind-unaware",
        frac >= 0.7,
        false,
        format!(
            "{wins}/{PAIRED_TRIALS} paired gusts (>= 70%); mean max X error {} vs {} m ({})",
            cmp.report(ControllerMode::WindAware).unwrap().max_error.display(),
            cmp.report(ControllerMode::WindUnaware).unwrap().max_error.display(),
            elapsed(t0)
        ),
    );
}

fn audit_run() -> Vec<Vec<u8>> {
    // too short to learn; the small actor step keeps the policy near the zero
    // residual, which clears the divergence check on these evaluation
    // episodes while every update still runs
    let hp = SacHyperparams {
        actor_lr: 1e-5,
        total_steps: 1_200,
        warmup_steps: 400,
        batch_size: 32,
        eval_interval: 600,
        eval_episodes: 5,
        ..SacHyperparams::default()
    };
    let setup = TrainSetup {
        hp,
        seed: 11,
        ..desk_setup(ControllerMode::WindAware)
    };
    let outcome = train(&setup, |_| {}).unwrap();
    let mut curves = Vec::new();
    write_curves_csv(&mut curves, &outcome.curves).unwrap();
    let exp = ExperimentSetup::default();
    let mut out = vec![curves];
    for (mode, policy) in [
        (ControllerMode::WindAware, Some(&outcome.actor)),
        (ControllerMode::Baseline, None),
    ] {
        let trace = run_episode(&exp, &ScenarioSpec::hardware_timeline(mode, 11, 0), policy).unwrap();
        let mut csv = Vec::new();
        write_trace_csv(&mut csv, &trace).unwrap();
        out.push(csv);
    }
    out
}

fn determinism(o: &mut Outcome) {
    let t0 = Instant::now();
    let first = audit_run();
    let second = audit_run();
    let identical = first == second;
    let bytes: usize = first.iter().map(|b| b.len()).sum();
    o.line(
        7,
        "determinism audit",
        identical,
        true,
        format!(
            "two single-threaded runs: curve CSV and two trace CSVs ({bytes} bytes) {} ({})",
            if identical { "byte-identical" } else { "differ" },
            elapsed(t0)
        ),
    );
}

fn protocol_fidelity(o: &mut Outcome) {
    let t0 = Instant::now();
    let setup = ExperimentSetup::default();
    let mut problems = Vec::new();
    let trials = 5;
    for trial in 0..trials {
        let spec = ScenarioSpec::hardware_timeline(ControllerMode::Baseline, EVAL_SEED, trial);
        let trace = run_episode(&setup, &spec, None).unwrap();
        let mut csv = Vec::new();
        write_trace_csv(&mut csv, &trace).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let (ct, cx, cy, cz) = (col("t"), col("wind_x"), col("wind_y"), col("wind_z"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        let last_t = rows.last().map(|r| r[ct]).unwrap_or(0.0);
        if rows.len() != 1200 || (last_t + 1.0 / 40.0 - 30.0).abs() > 1e-9 {
            problems.push(format!("trial {trial}: {} rows ending at {last_t}", rows.len()));
        }
        let calm_before = rows
            .iter()
            .filter(|r| r[ct] < 12.0)
            .all(|r| r[cx] == 0.0 && r[cy] == 0.0 && r[cz] == 0.0);
        let gust_after = rows.iter().filter(|r| r[ct] > 12.0).all(|r| r[cx] > 0.0);
        if !calm_before {
            problems.push(format!("trial {trial}: wind before 12 s"));
        }
        if !gust_after {
            problems.push(format!("trial {trial}: calm after 12 s"));
        }
    }
    o.line(
        8,
        "protocol fidelity",
        problems.is_empty(),
        true,
        if problems.is_empty() {
            format!(
                "{trials} hardware-timeline traces: 1200 rows over 30 s, true wind zero on [0, 12) s and positive on (12, 30) s ({})",
                elapsed(t0)
            )
        } else {
            problems.join("; ")
        },
    );
}

#[test]
fn acceptance_criteria() {
    let mut o = Outcome {
        hard_failures: Vec::new(),
    };
    hover_stability(&mut o);
    sensor_round_trip(&mut o);
    filter_oracle(&mut o);
    gradient_oracle(&mut o);
    let t0 = Instant::now();
    let aware = desk_policy(ControllerMode::WindAware);
    let unaware = desk_policy(ControllerMode::WindUnaware);
    {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "  desk-scale policies ready ({})", elapsed(t0));
    }
    desk_scale_learning(&mut o, &aware);
    ordering(&mut o, &aware, &unaware);
    determinism(&mut o);
    protocol_fidelity(&mut o);
    assert!(o.hard_failures.is_empty(), "failed criteria: {:?}", o.hard_failures);
}
