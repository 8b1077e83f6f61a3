//! Episodic SAC training of the residual policy in the gust environment.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;

use super::actor::Actor;
use super::obs::{Observation, ACTION_DIM, OBS_DIM};
use super::replay::ReplayBuffer;
use super::sac::{LossReport, Sac, SacHyperparams};
use crate::control::{ControllerMode, ResidualAction};
use crate::env::{sample_initial_state, EnvConfig, GustEnv, SensorSetup};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};
use crate::wind::{sample_gust_profile, GustRanges};

#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub env: EnvConfig,
    pub gust: GustRanges,
    pub sensor: SensorSetup,
    pub mode: ControllerMode,
    pub hp: SacHyperparams,
    pub seed: u64,
    /// Environments stepped in lockstep; 1 is the single-threaded mode.
    pub workers: usize,
}

/// One row per evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub episodes: usize,
    /// Mean return of the last ten finished training episodes.
    pub train_return: f64,
    pub eval_return: f64,
    pub eval_max_x_error: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-evaluation weights.
    pub actor: Actor<f64>,
    pub best_eval_return: f64,
    pub random_return: f64,
    pub baseline: EvalSummary,
    pub curves: Vec<CurveRow>,
    /// Set when training stopped on a non-finite loss; `actor` is the last
    /// good checkpoint.
    pub halted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub mean_max_x_error: f64,
}

/// Action source for evaluation rollouts.
pub enum EvalPolicy<'a> {
    Zero,
    Random(&'a mut SimRng),
    Actor(&'a Actor<f32>),
}

fn episode_start(
    env: &mut GustEnv,
    gust: &GustRanges,
    root: u64,
    stream_base: Stream,
    index: u64,
) -> Result<Observation> {
    let base = derive_seed(root, stream_base, index);
    let profile = sample_gust_profile(&mut stream_rng(base, Stream::Gust, 0), gust)?;
    let init = sample_initial_state(env.config(), &mut stream_rng(base, Stream::InitialState, 0))?;
    env.reset(init, profile, stream_rng(base, Stream::SensorNoise, 0))
}

fn actor_actions(actor: &Actor<f32>, obs: &[Observation], stochastic: bool, rng: &mut SimRng) -> Vec<[f64; ACTION_DIM]> {
    let x = Array2::from_shape_fn((obs.len(), OBS_DIM), |(i, j)| obs[i].0[j] as f32);
    let a = actor.act(x.view(), stochastic, rng);
    a.rows()
        .into_iter()
        .map(|r| std::array::from_fn(|j| r[j] as f64))
        .collect()
}

fn mean_action(actor: &Actor<f32>, obs: &Observation) -> [f64; ACTION_DIM] {
    let x = Array2::from_shape_fn((1, OBS_DIM), |(_, j)| obs.0[j] as f32);
    let m = actor.mean(x.view());
    std::array::from_fn(|j| (m[[0, j]] as f64).tanh())
}

/// Deterministic rollouts on held-out episodes `0..episodes` of the
/// evaluation stream.
pub fn evaluate_policy(
    env: &mut GustEnv,
    gust: &GustRanges,
    seed: u64,
    episodes: usize,
    mut policy: EvalPolicy<'_>,
) -> Result<EvalSummary> {
    let mut total_return = 0.0;
    let mut total_max_x = 0.0;
    let x_sp = env.config().setpoint[0];
    for e in 0..episodes {
        let mut obs = episode_start(env, gust, seed, Stream::Evaluation, e as u64)?;
        let mut ret = 0.0;
        let mut max_x = (env.state().r.x - x_sp).abs();
        loop {
            let a = match &mut policy {
                EvalPolicy::Zero => [0.0; ACTION_DIM],
                EvalPolicy::Random(rng) => std::array::from_fn(|_| rng.random_range(-1.0..=1.0)),
                EvalPolicy::Actor(actor) => mean_action(actor, &obs),
            };
            let (tr, _) = env.step(&ResidualAction::from_normalized(a))?;
            ret += tr.reward;
            max_x = max_x.max((env.state().r.x - x_sp).abs());
            obs = tr.obs;
            if tr.terminated || tr.truncated {
                break;
            }
        }
        total_return += ret;
        total_max_x += max_x;
    }
    Ok(EvalSummary {
        mean_return: total_return / episodes as f64,
        mean_max_x_error: total_max_x / episodes as f64,
    })
}

struct Worker {
    env: GustEnv,
    obs: Observation,
    ret: f64,
}

pub fn train(setup: &TrainSetup, mut progress: impl FnMut(&CurveRow)) -> Result<TrainOutcome> {
    let hp = &setup.hp;
    hp.validate()?;
    setup.env.validate()?;
    setup.gust.validate()?;
    if !setup.mode.has_policy() {
        return Err(Error::Usage(
            "baseline has no trainable policy; use wind-aware or wind-unaware".into(),
        ));
    }
    if setup.workers == 0 {
        return Err(Error::Usage("workers must be at least 1".into()));
    }

    let seed = setup.seed;
    let mut net_rng = stream_rng(seed, Stream::NetInit, 0);
    let mut sac = Sac::<f32>::new(OBS_DIM, ACTION_DIM, hp.clone(), &mut net_rng);
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity);
    let mut explore = stream_rng(seed, Stream::Exploration, 0);
    let mut replay = stream_rng(seed, Stream::Replay, 0);
    let mut update_noise = stream_rng(seed, Stream::Exploration, 1);

    let make_env = || GustEnv::new(setup.env.clone(), setup.mode, setup.sensor.build());
    let mut eval_env = make_env()?;
    let random_return = evaluate_policy(
        &mut eval_env,
        &setup.gust,
        seed,
        hp.eval_episodes,
        EvalPolicy::Random(&mut stream_rng(seed, Stream::Exploration, 2)),
    )?
    .mean_return;
    let baseline = evaluate_policy(&mut eval_env, &setup.gust, seed, hp.eval_episodes, EvalPolicy::Zero)?;

    let mut next_episode: u64 = 0;
    let mut workers = Vec::with_capacity(setup.workers);
    for _ in 0..setup.workers {
        let mut env = make_env()?;
        let obs = episode_start(&mut env, &setup.gust, seed, Stream::Gust, next_episode)?;
        next_episode += 1;
        workers.push(Worker { env, obs, ret: 0.0 });
    }

    let mut best = (f64::NEG_INFINITY, sac.actor.cast::<f64>());
    let mut recent_returns: Vec<f64> = Vec::new();
    let mut finished = 0usize;
    let mut last_loss = LossReport::default();
    let mut curves = Vec::new();
    let mut halted = None;
    let mut step = 0usize;
    let mut update_credit = 0usize;
    let mut next_eval = hp.eval_interval;

    'outer: while step < hp.total_steps {
        let obs: Vec<Observation> = workers.iter().map(|w| w.obs).collect();
        let actions: Vec<[f64; ACTION_DIM]> = if step < hp.warmup_steps {
            obs.iter()
                .map(|_| std::array::from_fn(|_| explore.random_range(-1.0..=1.0)))
                .collect()
        } else {
            actor_actions(&sac.actor, &obs, true, &mut explore)
        };
        let results: Vec<_> = if workers.len() == 1 {
            vec![workers[0].env.step(&ResidualAction::from_normalized(actions[0]))]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = workers
                    .iter_mut()
                    .zip(&actions)
                    .map(|(w, a)| s.spawn(move || w.env.step(&ResidualAction::from_normalized(*a))))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect()
            })
        };
        for (i, result) in results.into_iter().enumerate() {
            let w = &mut workers[i];
            let (next_obs, reward, terminated, truncated) = match result {
                Ok((tr, _)) => (tr.obs, tr.reward, tr.terminated, tr.truncated),
                // a numerical fault ends the episode like leaving the volume
                Err(Error::SimulationFault { .. }) => (w.obs, setup.env.terminal_reward, true, false),
                Err(e) => return Err(e),
            };
            buffer.push(&w.obs, &actions[i], reward, &next_obs, terminated);
            w.ret += reward;
            w.obs = next_obs;
            if terminated || truncated {
                recent_returns.push(w.ret);
                if recent_returns.len() > 10 {
                    recent_returns.remove(0);
                }
                finished += 1;
                w.ret = 0.0;
                w.obs = episode_start(&mut w.env, &setup.gust, seed, Stream::Gust, next_episode)?;
                next_episode += 1;
            }
            step += 1;
            if step >= hp.warmup_steps && buffer.len() >= hp.batch_size {
                update_credit += 1;
            }
        }
        while update_credit >= hp.steps_per_update {
            update_credit -= hp.steps_per_update;
            let batch = buffer.sample(hp.batch_size, &mut replay);
            match sac.update(&batch, &mut update_noise) {
                Ok(report) => last_loss = report,
                Err(Error::TrainingFault(msg)) => {
                    halted = Some(format!("step {step}: {msg}"));
                    if best.0 == f64::NEG_INFINITY {
                        best.1 = sac.actor.cast();
                    }
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        if step >= next_eval || step >= hp.total_steps {
            next_eval += hp.eval_interval;
            let actor = sac.actor.clone();
            let summary = evaluate_policy(
                &mut eval_env,
                &setup.gust,
                seed,
                hp.eval_episodes,
                EvalPolicy::Actor(&actor),
            )?;
            if summary.mean_return > best.0 {
                best = (summary.mean_return, actor.cast());
            }
            let row = CurveRow {
                step,
                episodes: finished,
                train_return: if recent_returns.is_empty() {
                    f64::NAN
                } else {
                    recent_returns.iter().sum::<f64>() / recent_returns.len() as f64
                },
                eval_return: summary.mean_return,
                eval_max_x_error: summary.mean_max_x_error,
                alpha: last_loss.alpha,
                critic_loss: last_loss.critic_loss,
                actor_loss: last_loss.actor_loss,
                entropy: last_loss.entropy,
            };
            progress(&row);
            curves.push(row);
            if step * 5 >= hp.total_steps && best.0 < random_return {
                return Err(Error::TrainingFault(format!(
                    "diverged: best evaluation return {:.3} after {step} steps is worse than the \
                     random policy ({random_return:.3}); last critic loss {:.4}, alpha {:.4}",
                    best.0, last_loss.critic_loss, last_loss.alpha
                )));
            }
        }
    }

    Ok(TrainOutcome {
        actor: best.1,
        best_eval_return: best.0,
        random_return,
        baseline,
        curves,
        halted,
    })
}

pub const CURVE_HEADER: &str =
    "step,episodes,train_return,eval_return,eval_max_x_error,alpha,critic_loss,actor_loss,entropy";

pub fn write_curves_csv<W: Write>(out: &mut W, rows: &[CurveRow]) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.episodes,
            r.train_return,
            r.eval_return,
            r.eval_max_x_error,
            r.alpha,
            r.critic_loss,
            r.actor_loss,
            r.entropy
        )?;
    }
    Ok(())
}
