//! Soft Actor-Critic update: twin critics with target copies, a
//! reparameterized actor and a learned entropy temperature.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::actor::{batch_mean, Actor};
use super::replay::{Batch, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Grads, Mlp, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub target_entropy: f64,
    pub initial_alpha: f64,
    /// Environment steps between gradient updates.
    pub steps_per_update: usize,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub buffer_capacity: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Environment steps between evaluations.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for SacHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 256,
            target_entropy: -4.0,
            initial_alpha: 0.1,
            steps_per_update: 1,
            warmup_steps: 5_000,
            total_steps: 200_000,
            buffer_capacity: DEFAULT_CAPACITY,
            actor_hidden: super::actor::ACTOR_HIDDEN.to_vec(),
            critic_hidden: vec![256, 256],
            eval_interval: 10_000,
            eval_episodes: 5,
        }
    }
}

impl SacHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("sac: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.alpha_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.initial_alpha > 0.0) {
            return bad("initial_alpha must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if self.total_steps == 0 || self.steps_per_update == 0 || self.eval_interval == 0 {
            return bad("total_steps, steps_per_update and eval_interval must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Minus the batch mean log-density of fresh actions.
    pub entropy: f64,
}

/// Actor loss value and gradients.
#[derive(Debug, Clone)]
pub struct ActorGrads<T> {
    pub loss: T,
    pub net: Grads<T>,
    pub log_std: Array1<T>,
    pub log_prob_mean: T,
}

#[derive(Debug, Clone)]
pub struct Sac<T> {
    pub actor: Actor<T>,
    pub critics: [Mlp<T>; 2],
    pub targets: [Mlp<T>; 2],
    pub log_alpha: T,
    pub hp: SacHyperparams,
    actor_opt: Adam<T>,
    critic_opts: [Adam<T>; 2],
    alpha_opt: Adam<T>,
}

fn joined<T: Real>(obs: ArrayView2<T>, actions: ArrayView2<T>) -> Array2<T> {
    concatenate![Axis(1), obs, actions]
}

pub fn gaussian_noise<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::c(rng.sample::<f64, _>(StandardNormal)))
}

impl<T: Real> Sac<T> {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hp: SacHyperparams, rng: &mut R) -> Self {
        let actor = Actor::new(obs_dim, &hp.actor_hidden, act_dim, rng);
        let mut dims = vec![obs_dim + act_dim];
        dims.extend(&hp.critic_hidden);
        dims.push(1);
        let critics = [
            Mlp::new(&dims, Activation::Relu, Activation::Identity, rng),
            Mlp::new(&dims, Activation::Relu, Activation::Identity, rng),
        ];
        Self {
            targets: critics.clone(),
            critics,
            actor,
            log_alpha: T::c(hp.initial_alpha.ln()),
            actor_opt: Adam::new(hp.actor_lr),
            critic_opts: [Adam::new(hp.critic_lr), Adam::new(hp.critic_lr)],
            alpha_opt: Adam::new(hp.alpha_lr),
            hp,
        }
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.net.input_dim()
    }

    /// TD targets `r + gamma (1 - d) (min target Q(s', a') - alpha log pi(a'|s'))`
    /// with `a' = tanh(mu(s') + sigma * next_eps)`.
    pub fn td_targets(&self, batch: &Batch<T>, next_eps: Array2<T>) -> Array1<T> {
        let next = self.actor.sample_with(batch.next_obs.view(), next_eps);
        let input = joined(batch.next_obs.view(), next.action.view());
        let q1 = self.targets[0].forward(input.view());
        let q2 = self.targets[1].forward(input.view());
        let gamma = T::c(self.hp.gamma);
        let alpha = self.alpha();
        Array1::from_shape_fn(batch.rewards.len(), |i| {
            let soft = q1[[i, 0]].min(q2[[i, 0]]) - alpha * next.log_prob[i];
            batch.rewards[i] + gamma * (T::one() - batch.dones[i]) * soft
        })
    }

    /// Sum over both critics of the mean squared TD error, with gradients
    /// for each critic. Targets are treated as constants.
    pub fn critic_loss(&self, batch: &Batch<T>, targets: &Array1<T>) -> (T, [Grads<T>; 2]) {
        let input = joined(batch.obs.view(), batch.actions.view());
        let n = T::c(batch.rewards.len() as f64);
        let mut total = T::zero();
        let grads = std::array::from_fn(|k| {
            let trace = self.critics[k].forward_trace(input.view());
            let q = trace.output().column(0).to_owned();
            let diff = &q - targets;
            total += diff.mapv(|d| d * d).sum() / n;
            let grad = diff.mapv(|d| T::c(2.0) * d / n).insert_axis(Axis(1));
            self.critics[k].backward(&trace, grad, false).0
        });
        (total, grads)
    }

    /// `mean(alpha log pi(a|s) - min_k Q_k(s, a))` with reparameterized `a`.
    pub fn actor_loss(&self, obs: ArrayView2<T>, eps: Array2<T>) -> ActorGrads<T> {
        let b = obs.nrows();
        let n = T::c(b as f64);
        let obs_dim = obs.ncols();
        let alpha = self.alpha();
        let sample = self.actor.sample_with(obs, eps);
        let input = joined(obs, sample.action.view());
        let traces = [
            self.critics[0].forward_trace(input.view()),
            self.critics[1].forward_trace(input.view()),
        ];
        let mut loss = T::zero();
        let mut pick = [Array2::zeros((b, 1)), Array2::zeros((b, 1))];
        for i in 0..b {
            let (q1, q2) = (traces[0].output()[[i, 0]], traces[1].output()[[i, 0]]);
            let k = if q2 < q1 { 1 } else { 0 };
            loss += (alpha * sample.log_prob[i] - q1.min(q2)) / n;
            pick[k][[i, 0]] = -T::one() / n;
        }
        let mut grad_a = Array2::<T>::zeros((b, sample.action.ncols()));
        for k in 0..2 {
            let g = self.critics[k].input_grad(&traces[k], pick[k].clone());
            grad_a += &g.slice(s![.., obs_dim..]);
        }
        let (log_std, inside) = self.actor.log_std_clamped();
        let std = log_std.mapv(|l| l.exp());
        let two = T::c(2.0);
        let grad_u = Array2::from_shape_fn(grad_a.raw_dim(), |(i, j)| {
            let a = sample.action[[i, j]];
            alpha * two * a / n + grad_a[[i, j]] * (T::one() - a * a)
        });
        let grad_log_std = Array1::from_shape_fn(log_std.len(), |j| {
            if !inside[j] {
                return T::zero();
            }
            let mut g = -alpha;
            for i in 0..b {
                g += grad_u[[i, j]] * std[j] * sample.eps[[i, j]];
            }
            g
        });
        let (net, _) = self.actor.net.backward(&sample.trace, grad_u, false);
        ActorGrads {
            loss,
            net,
            log_std: grad_log_std,
            log_prob_mean: batch_mean(&sample.log_prob),
        }
    }

    /// `-log_alpha * (mean log pi + target_entropy)` and its derivative.
    pub fn alpha_loss(&self, log_prob_mean: T) -> (T, T) {
        let g = -(log_prob_mean + T::c(self.hp.target_entropy));
        (self.log_alpha * g, g)
    }

    /// One gradient step on each loss, then Polyak averaging of the targets.
    /// Non-finite losses abort before any parameter changes.
    pub fn update<R: Rng>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<LossReport> {
        let b = batch.rewards.len();
        let act_dim = self.actor.act_dim();
        let y = self.td_targets(batch, gaussian_noise(b, act_dim, rng));
        let (critic_loss, critic_grads) = self.critic_loss(batch, &y);
        if !critic_loss.is_finite() {
            return Err(Error::TrainingFault(format!(
                "critic loss is {critic_loss}; alpha {}",
                self.alpha()
            )));
        }
        for (k, g) in critic_grads.iter().enumerate() {
            self.critic_opts[k].update(self.critics[k].tensors_mut(), g.tensors());
        }

        let ag = self.actor_loss(batch.obs.view(), gaussian_noise(b, act_dim, rng));
        if !ag.loss.is_finite() || !ag.log_prob_mean.is_finite() {
            return Err(Error::TrainingFault(format!(
                "actor loss is {}; critic loss {critic_loss}",
                ag.loss
            )));
        }
        let mut params = self.actor.net.tensors_mut();
        params.push(self.actor.log_std.as_slice_mut().expect("contiguous"));
        let mut grads = ag.net.tensors();
        grads.push(ag.log_std.as_slice().expect("contiguous"));
        self.actor_opt.update(params, grads);

        let (alpha_loss, alpha_grad) = self.alpha_loss(ag.log_prob_mean);
        self.alpha_opt.update(
            vec![std::slice::from_mut(&mut self.log_alpha)],
            vec![std::slice::from_ref(&alpha_grad)],
        );

        let tau = T::c(self.hp.tau);
        for k in 0..2 {
            self.targets[k].soft_update(&self.critics[k], tau);
        }
        Ok(LossReport {
            critic_loss: critic_loss.f64(),
            actor_loss: ag.loss.f64(),
            alpha_loss: alpha_loss.f64(),
            alpha: self.alpha().f64(),
            entropy: -ag.log_prob_mean.f64(),
        })
    }
}
