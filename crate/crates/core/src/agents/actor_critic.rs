//! Pieces shared by the three actor-critic agents.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AgentError, ACTION_DIM};
use crate::env::Observation;
use crate::neural::{Adam, Head, Mlp, NeuralError};

/// Knobs every deep agent reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_starts: usize,
}

impl Common {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |key: &str, msg: &str| {
            Err(AgentError::InvalidParameter {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if self.buffer_size == 0 || self.batch_size == 0 {
            return bad("batch_size", "buffer and batch sizes must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "need at least one non-empty hidden layer");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Record {
    pub s: Observation,
    pub a: [f64; ACTION_DIM],
    pub r: f64,
    pub s2: Observation,
    pub d: bool,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s2: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub d: Array1<f64>,
}

impl Batch {
    pub(crate) fn from_records(records: &[&Record]) -> Batch {
        let n = records.len();
        let width = records.first().map_or(0, |r| r.s.len());
        let mut s = Array2::zeros((n, width));
        let mut s2 = Array2::zeros((n, width));
        let mut a = Array2::zeros((n, ACTION_DIM));
        for (i, rec) in records.iter().enumerate() {
            rec.s
                .write_input(s.row_mut(i).as_slice_mut().expect("row-major"));
            rec.s2
                .write_input(s2.row_mut(i).as_slice_mut().expect("row-major"));
            for k in 0..ACTION_DIM {
                a[[i, k]] = rec.a[k];
            }
        }
        Batch {
            s,
            a,
            r: records.iter().map(|r| r.r).collect(),
            s2,
            d: records.iter().map(|r| f64::from(u8::from(r.d))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn join(s: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s.view(), a.view()]).expect("same batch size")
}

#[cfg(test)]
pub(crate) fn row(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector")
}

/// `y = r + gamma * (1 - d) * next_value`.
pub fn bellman_target(
    r: &Array1<f64>,
    d: &Array1<f64>,
    next_value: &Array1<f64>,
    gamma: f64,
) -> Array1<f64> {
    let mut y = r.clone();
    ndarray::Zip::from(&mut y)
        .and(d)
        .and(next_value)
        .for_each(|y, &d, &v| *y += gamma * (1.0 - d) * v);
    y
}

/// Q-network with its target copy and optimizer.
#[derive(Debug, Clone)]
pub struct Critic {
    pub net: Mlp,
    pub target: Mlp,
    opt: Adam,
}

impl Critic {
    pub fn new(
        obs_len: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        let net = Mlp::new(obs_len + ACTION_DIM, hidden, 1, Head::Linear, rng)?;
        Ok(Critic {
            target: net.clone(),
            opt: Adam::new(&net, lr),
            net,
        })
    }

    pub fn q(&self, s: &Array2<f64>, a: &Array2<f64>) -> Result<Array1<f64>, NeuralError> {
        Ok(self.net.predict(&join(s, a))?.column(0).to_owned())
    }

    pub fn target_q(&self, s: &Array2<f64>, a: &Array2<f64>) -> Result<Array1<f64>, NeuralError> {
        Ok(self.target.predict(&join(s, a))?.column(0).to_owned())
    }

    /// One Adam step on the mean squared error to `y`; returns the loss
    /// before the step.
    pub fn regress(
        &mut self,
        s: &Array2<f64>,
        a: &Array2<f64>,
        y: &Array1<f64>,
    ) -> Result<f64, NeuralError> {
        let cache = self.net.forward(&join(s, a))?;
        let q = cache.output().column(0);
        let n = y.len() as f64;
        let diff = &q - y;
        let loss = diff.mapv(|e| e * e).sum() / n;
        let grad = (diff * (2.0 / n)).insert_axis(Axis(1));
        let (g, _) = self.net.backward(&cache, &grad)?;
        self.opt.step(&mut self.net, &g)?;
        Ok(loss)
    }

    /// Per-sample `weight_i * dQ(s_i, a_i)/da_i`.
    pub fn action_grad(
        &self,
        s: &Array2<f64>,
        a: &Array2<f64>,
        weight: &Array1<f64>,
    ) -> Result<Array2<f64>, NeuralError> {
        let cache = self.net.forward(&join(s, a))?;
        let (_, dx) = self
            .net
            .backward(&cache, &weight.clone().insert_axis(Axis(1)))?;
        Ok(dx.slice(s![.., s.ncols()..]).to_owned())
    }

    pub fn soft_update(&mut self, tau: f64) {
        self.target.soft_update(&self.net, tau);
    }
}

/// Deterministic tanh policy with target copy.
#[derive(Debug, Clone)]
pub struct Actor {
    pub net: Mlp,
    pub target: Mlp,
    opt: Adam,
}

impl Actor {
    pub fn new(
        obs_len: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        let net = Mlp::new(obs_len, hidden, ACTION_DIM, Head::Tanh, rng)?;
        Ok(Actor {
            target: net.clone(),
            opt: Adam::new(&net, lr),
            net,
        })
    }

    pub fn policy(&self, obs: &[f64]) -> [f64; ACTION_DIM] {
        let out = self
            .net
            .predict_one(obs)
            .expect("observation width fixed at construction");
        [out[0], out[1], out[2]]
    }

    /// Ascends `mean Q(s, pi(s))` under `critic`.
    pub fn ascend(&mut self, critic: &Critic, s: &Array2<f64>) -> Result<(), NeuralError> {
        let cache = self.net.forward(s)?;
        let a = cache.output().clone();
        let n = s.nrows() as f64;
        let weight = Array1::from_elem(s.nrows(), -1.0 / n);
        let da = critic.action_grad(s, &a, &weight)?;
        let (g, _) = self.net.backward(&cache, &da)?;
        self.opt.step(&mut self.net, &g)
    }

    pub fn soft_update(&mut self, tau: f64) {
        self.target.soft_update(&self.net, tau);
    }
}

/// Epsilon-style exploration for deterministic policies: with probability
/// `random_exploration` a uniform triple, otherwise the policy plus
/// Gaussian noise, clamped. Returns the action and whether it was random.
pub(crate) fn explore_deterministic(
    actor: &Actor,
    obs: &[f64],
    random_exploration: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> ([f64; ACTION_DIM], bool) {
    if rng.random::<f64>() < random_exploration {
        let mut a = [0.0; ACTION_DIM];
        for v in &mut a {
            *v = rng.random_range(-1.0..=1.0);
        }
        return (a, true);
    }
    let mut a = actor.policy(obs);
    for v in &mut a {
        let eps: f64 = StandardNormal.sample(rng);
        *v = (*v + noise * eps).clamp(-1.0, 1.0);
    }
    (a, false)
}
