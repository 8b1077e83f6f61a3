//! Tanh-squashed Gaussian actor. The network produces the mean; the
//! log standard deviation is a learned, state-independent vector.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::obs::{Observation, ACTION_DIM, OBS_DIM};
use crate::control::{ResidualAction, RATE_RESIDUAL_LIMIT, THRUST_RESIDUAL_LIMIT};
use crate::error::{Error, Result};
use crate::nn::{read_net, write_net, Activation, Mlp, NetFile, Real, Trace};

pub const ACTOR_HIDDEN: [usize; 4] = [512, 256, 128, 128];
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Actions are pulled this far inside the box before inverting tanh.
pub const BOUNDARY_EPS: f64 = 1e-6;

/// Physical half-widths of the action box: three body rates and thrust.
pub const ACTION_SCALE: [f64; ACTION_DIM] = [
    RATE_RESIDUAL_LIMIT,
    RATE_RESIDUAL_LIMIT,
    RATE_RESIDUAL_LIMIT,
    THRUST_RESIDUAL_LIMIT,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Actor<T> {
    pub net: Mlp<T>,
    pub log_std: Array1<T>,
}

/// `ln(1 - tanh(u)^2)` without cancellation.
pub fn log_one_minus_tanh_sq<T: Real>(u: T) -> T {
    let two = T::c(2.0);
    two * (T::c(std::f64::consts::LN_2) - u - softplus(-two * u))
}

pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Intermediate values of a reparameterized sample, kept for backprop.
#[derive(Debug, Clone)]
pub struct ActorSample<T> {
    pub trace: Trace<T>,
    pub eps: Array2<T>,
    pub u: Array2<T>,
    /// `tanh(u)`, the normalized action.
    pub action: Array2<T>,
    /// Per-row log-density of the normalized action.
    pub log_prob: Array1<T>,
}

impl<T: Real> Actor<T> {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Self {
        let mut dims = vec![obs_dim];
        dims.extend(hidden);
        dims.push(act_dim);
        let mut net = Mlp::new(&dims, Activation::Relu, Activation::Identity, rng);
        // small output layer so the initial mean sits near zero
        let last = net.layers.last_mut().expect("non-empty");
        last.w.mapv_inplace(|w| w * T::c(0.01));
        Self {
            net,
            log_std: Array1::zeros(act_dim),
        }
    }

    pub fn residual<R: Rng>(rng: &mut R) -> Self {
        Self::new(OBS_DIM, &ACTOR_HIDDEN, ACTION_DIM, rng)
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Self {
        let mut dims = vec![obs_dim];
        dims.extend(hidden);
        dims.push(act_dim);
        Self {
            net: Mlp::zeros(&dims, Activation::Relu, Activation::Identity),
            log_std: Array1::zeros(act_dim),
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Clamped log standard deviation and a mask of entries inside the clamp.
    pub fn log_std_clamped(&self) -> (Array1<T>, Array1<bool>) {
        let (lo, hi) = (T::c(LOG_STD_MIN), T::c(LOG_STD_MAX));
        (
            self.log_std.mapv(|l| l.max(lo).min(hi)),
            self.log_std.mapv(|l| l > lo && l < hi),
        )
    }

    pub fn mean(&self, obs: ArrayView2<T>) -> Array2<T> {
        self.net.forward(obs)
    }

    /// Reparameterized sample `tanh(mu + sigma * eps)` with its log-density.
    pub fn sample_with(&self, obs: ArrayView2<T>, eps: Array2<T>) -> ActorSample<T> {
        let trace = self.net.forward_trace(obs);
        let (log_std, _) = self.log_std_clamped();
        let std = log_std.mapv(|l| l.exp());
        let u = trace.output() + &(&eps * &std);
        let action = u.mapv(|x| x.tanh());
        let half_log_2pi = T::c(0.5 * (2.0 * PI).ln());
        let mut log_prob = Array1::zeros(obs.nrows());
        for (i, lp) in log_prob.iter_mut().enumerate() {
            let mut acc = T::zero();
            for j in 0..self.act_dim() {
                let e = eps[[i, j]];
                acc += -T::c(0.5) * e * e - log_std[j] - half_log_2pi
                    - log_one_minus_tanh_sq(u[[i, j]]);
            }
            *lp = acc;
        }
        ActorSample {
            trace,
            eps,
            u,
            action,
            log_prob,
        }
    }

    pub fn sample<R: Rng>(&self, obs: ArrayView2<T>, rng: &mut R) -> ActorSample<T> {
        let eps = Array2::from_shape_simple_fn((obs.nrows(), self.act_dim()), || {
            T::c(rng.sample::<f64, _>(StandardNormal))
        });
        self.sample_with(obs, eps)
    }

    /// Normalized actions in `[-1, 1]`; the mean when not stochastic.
    pub fn act<R: Rng>(&self, obs: ArrayView2<T>, stochastic: bool, rng: &mut R) -> Array2<T> {
        if stochastic {
            self.sample(obs, rng).action
        } else {
            self.mean(obs).mapv(|x| x.tanh())
        }
    }

    /// Log-density of normalized actions. Entries on or beyond the boundary
    /// are pulled `BOUNDARY_EPS` inside first.
    pub fn log_prob_normalized(&self, obs: ArrayView2<T>, actions: ArrayView2<T>) -> Array1<T> {
        let mean = self.mean(obs);
        let (log_std, _) = self.log_std_clamped();
        let limit = T::one() - T::c(BOUNDARY_EPS);
        let half_log_2pi = T::c(0.5 * (2.0 * PI).ln());
        let mut out = Array1::zeros(obs.nrows());
        Zip::from(&mut out)
            .and(mean.rows())
            .and(actions.rows())
            .for_each(|lp, mu, a| {
                let mut acc = T::zero();
                for j in 0..mu.len() {
                    let aj = a[j].max(-limit).min(limit);
                    let u = aj.atanh();
                    let z = (u - mu[j]) / log_std[j].exp();
                    acc += -T::c(0.5) * z * z - log_std[j] - half_log_2pi
                        - log_one_minus_tanh_sq(u);
                }
                *lp = acc;
            });
        out
    }

    pub fn cast<U: Real>(&self) -> Actor<U> {
        Actor {
            net: self.net.cast(),
            log_std: self.log_std.mapv(|x| U::c(x.f64())),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite() && self.log_std.iter().all(|x| x.is_finite())
    }
}

impl Actor<f64> {
    /// Weight file with the log standard deviation stored as extras.
    pub fn to_file(&self) -> NetFile {
        NetFile {
            net: self.net.clone(),
            extras: self.log_std.to_vec(),
        }
    }

    pub fn from_file(file: NetFile) -> Result<Self> {
        if file.extras.len() != file.net.output_dim() {
            return Err(Error::WeightFormat(format!(
                "actor file has {} extras, expected {}",
                file.extras.len(),
                file.net.output_dim()
            )));
        }
        Ok(Self {
            log_std: Array1::from(file.extras),
            net: file.net,
        })
    }
}

/// Layer widths of a residual-policy checkpoint.
pub fn actor_dims() -> Vec<usize> {
    let mut dims = vec![OBS_DIM];
    dims.extend(ACTOR_HIDDEN);
    dims.push(ACTION_DIM);
    dims
}

pub fn save_actor(path: &Path, actor: &Actor<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_net(&mut out, &actor.to_file())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Loads a residual-policy checkpoint, rejecting any other network shape.
pub fn load_actor(path: &Path) -> Result<Actor<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let net = read_net(BufReader::new(file), Some(&actor_dims())).map_err(|e| match e {
        Error::ShapeMismatch { expected, found } => Error::ShapeMismatch {
            expected: format!("{expected} (policy checkpoint)"),
            found: format!("{found} in {}", path.display()),
        },
        other => other,
    })?;
    Actor::from_file(net)
}

/// One residual action for one observation. Deterministic mode uses the
/// mean. Non-finite network outputs are a training fault.
pub fn policy_forward<T: Real, R: Rng>(
    actor: &Actor<T>,
    obs: &Observation,
    stochastic: bool,
    rng: &mut R,
) -> Result<ResidualAction> {
    let x = Array2::from_shape_fn((1, OBS_DIM), |(_, j)| T::c(obs.0[j]));
    actor.net.check_input(&x.view())?;
    let a = actor.act(x.view(), stochastic, rng);
    let a: Vec<f64> = a.iter().map(|v| v.f64()).collect();
    if a.len() != ACTION_DIM || !a.iter().all(|v| v.is_finite()) {
        return Err(Error::TrainingFault(format!(
            "policy produced non-finite action {a:?} for observation {:?}",
            obs.0
        )));
    }
    Ok(ResidualAction::from_normalized([a[0], a[1], a[2], a[3]]))
}

/// Log-density of a physical action whose box half-widths are `scale`.
pub fn log_prob_scaled(
    actor: &Actor<f64>,
    obs: &[f64],
    action: &[f64],
    scale: &[f64],
) -> f64 {
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row");
    let a = Array2::from_shape_fn((1, action.len()), |(_, j)| action[j] / scale[j]);
    let lp = actor.log_prob_normalized(x.view(), a.view())[0];
    lp - scale.iter().map(|s| s.ln()).sum::<f64>()
}

/// Log-density of a residual action under the physical action box.
pub fn log_prob(actor: &Actor<f64>, obs: &Observation, action: &ResidualAction) -> f64 {
    let a = [action.rates.x, action.rates.y, action.rates.z, action.thrust];
    log_prob_scaled(actor, &obs.0, &a, &ACTION_SCALE)
}

/// Mean of the per-row values, used for batch losses.
pub(crate) fn batch_mean<T: Real>(x: &Array1<T>) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.sum() / T::c(x.len() as f64)
}
