//! Soft actor-critic with a tanh-squashed Gaussian policy, twin critics and
//! a fixed entropy coefficient.

use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::actor_critic::{bellman_target, Batch, Common, Critic, Record};
use super::replay::{ReplayBuffer, DEFAULT_BATCH, DEFAULT_CAPACITY};
use super::td3::clipped_double;
use super::{Agent, AgentAction, AgentError, Algorithm, EnvShape, Experience, ACTION_DIM};
use crate::env::Observation;
use crate::neural::{Adam, Cache, Head, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_starts: usize,
    /// Environment steps between training rounds.
    pub train_freq: usize,
    pub gradient_steps: usize,
    /// Environment steps between target soft updates.
    pub target_update_interval: usize,
    /// Entropy coefficient.
    pub ent_coef: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            learning_rate: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            buffer_size: DEFAULT_CAPACITY,
            batch_size: DEFAULT_BATCH,
            hidden: vec![64, 64],
            learning_starts: 100,
            train_freq: 5,
            gradient_steps: 1,
            target_update_interval: 10,
            ent_coef: 0.2,
        }
    }
}

impl SacConfig {
    pub fn common(&self) -> Common {
        Common {
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            tau: self.tau,
            buffer_size: self.buffer_size,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            learning_starts: self.learning_starts,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `a = tanh(mean + std * eps)` for one action component.
pub fn squashed_log_prob(log_std: f64, eps: f64, u: f64) -> f64 {
    -0.5 * eps * eps - log_std - 0.5 * (2.0 * PI).ln() - log_one_minus_tanh_sq(u)
}

/// Reparameterised sample from a Gaussian-head output `[mean | log_std]`.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
    pub eps: Array2<f64>,
    pub std: Array2<f64>,
}

pub fn squash(head: &Array2<f64>, eps: Array2<f64>) -> SquashedSample {
    let k = head.ncols() / 2;
    let mean = head.slice(s![.., ..k]);
    let log_std = head.slice(s![.., k..]);
    let std = log_std.mapv(f64::exp);
    let u = &mean + &(&std * &eps);
    let action = u.mapv(f64::tanh);
    let mut log_prob = Array1::zeros(head.nrows());
    for i in 0..head.nrows() {
        log_prob[i] = (0..k)
            .map(|j| squashed_log_prob(log_std[[i, j]], eps[[i, j]], u[[i, j]]))
            .sum();
    }
    SquashedSample {
        action,
        log_prob,
        eps,
        std,
    }
}

/// Gradient of `mean_i(alpha * log_prob_i - q_i)` with respect to the
/// Gaussian-head output, given `dq_da[i] = d q_i / d a_i` (unscaled).
pub fn actor_head_grad(sample: &SquashedSample, dq_da: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let (n, k) = sample.action.dim();
    let scale = 1.0 / n as f64;
    let mut grad = Array2::zeros((n, 2 * k));
    for i in 0..n {
        for j in 0..k {
            let a = sample.action[[i, j]];
            let se = sample.std[[i, j]] * sample.eps[[i, j]];
            let dq_du = dq_da[[i, j]] * (1.0 - a * a);
            grad[[i, j]] = scale * (alpha * 2.0 * a - dq_du);
            grad[[i, k + j]] = scale * (alpha * (-1.0 + 2.0 * a * se) - dq_du * se);
        }
    }
    grad
}

#[derive(Debug, Clone)]
pub struct GaussianActor {
    pub net: Mlp,
    opt: Adam,
}

impl GaussianActor {
    pub fn new(
        obs_len: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        let net = Mlp::new(obs_len, hidden, ACTION_DIM, Head::Gaussian, rng)?;
        Ok(GaussianActor {
            opt: Adam::new(&net, lr),
            net,
        })
    }

    pub fn sample(
        &self,
        s: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(SquashedSample, Cache), AgentError> {
        let cache = self.net.forward(s)?;
        let eps =
            Array2::from_shape_simple_fn((s.nrows(), ACTION_DIM), || StandardNormal.sample(rng));
        Ok((squash(cache.output(), eps), cache))
    }

    pub fn mean_action(&self, obs: &[f64]) -> [f64; ACTION_DIM] {
        let out = self
            .net
            .predict_one(obs)
            .expect("observation width fixed at construction");
        [out[0].tanh(), out[1].tanh(), out[2].tanh()]
    }
}

#[derive(Debug, Clone)]
pub struct Sac {
    config: SacConfig,
    pub actor: GaussianActor,
    pub critics: [Critic; 2],
    buffer: ReplayBuffer<Record>,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl Sac {
    pub fn new(config: SacConfig, shape: EnvShape, seed: u64) -> Result<Self, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = GaussianActor::new(
            shape.obs_len,
            &config.hidden,
            config.learning_rate,
            &mut rng,
        )?;
        let c1 = Critic::new(
            shape.obs_len,
            &config.hidden,
            config.learning_rate,
            &mut rng,
        )?;
        let c2 = Critic::new(
            shape.obs_len,
            &config.hidden,
            config.learning_rate,
            &mut rng,
        )?;
        Ok(Sac {
            buffer: ReplayBuffer::new(config.buffer_size),
            config,
            actor,
            critics: [c1, c2],
            rng,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `r + gamma * (1 - d) * (min_k Q'_k(s', a') - alpha * log pi(a'|s'))`
    /// with `a'` freshly sampled.
    pub fn target(&mut self, batch: &Batch) -> Result<Array1<f64>, AgentError> {
        let (next, _) = self.actor.sample(&batch.s2, &mut self.rng)?;
        let q1 = self.critics[0].target_q(&batch.s2, &next.action)?;
        let q2 = self.critics[1].target_q(&batch.s2, &next.action)?;
        let soft = clipped_double(&q1, &q2) - &(next.log_prob * self.config.ent_coef);
        Ok(bellman_target(&batch.r, &batch.d, &soft, self.config.gamma))
    }

    /// Critic regression followed by one actor step on
    /// `mean(alpha * log pi(a|s) - min_k Q_k(s, a))`.
    pub fn update_on(&mut self, batch: &Batch) -> Result<(), AgentError> {
        let y = self.target(batch)?;
        for c in &mut self.critics {
            c.regress(&batch.s, &batch.a, &y)?;
        }

        let (sample, cache) = self.actor.sample(&batch.s, &mut self.rng)?;
        let q1 = self.critics[0].q(&batch.s, &sample.action)?;
        let q2 = self.critics[1].q(&batch.s, &sample.action)?;
        let first: Array1<f64> = q1
            .iter()
            .zip(&q2)
            .map(|(a, b)| f64::from(u8::from(a <= b)))
            .collect();
        let second = first.mapv(|v| 1.0 - v);
        let dq = self.critics[0].action_grad(&batch.s, &sample.action, &first)?
            + self.critics[1].action_grad(&batch.s, &sample.action, &second)?;
        let grad = actor_head_grad(&sample, &dq, self.config.ent_coef);
        let (g, _) = self.actor.net.backward(&cache, &grad)?;
        self.actor.opt.step(&mut self.actor.net, &g)?;
        self.updates += 1;
        Ok(())
    }

    pub fn update_targets(&mut self) {
        for c in &mut self.critics {
            c.soft_update(self.config.tau);
        }
    }
}

impl Agent for Sac {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Sac
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let x = obs.to_input();
        if !explore {
            return AgentAction::Continuous(self.actor.mean_action(&x));
        }
        let s = Array2::from_shape_vec((1, x.len()), x).expect("row vector");
        let (sample, _) = self
            .actor
            .sample(&s, &mut self.rng)
            .expect("observation width fixed at construction");
        let a = sample.action.index_axis(Axis(0), 0);
        AgentAction::Continuous([a[0], a[1], a[2]])
    }

    fn learn(&mut self, exp: &Experience<'_>) -> Result<(), AgentError> {
        let AgentAction::Continuous(a) = *exp.action else {
            return Err(AgentError::InvalidParameter {
                key: "action".into(),
                msg: "continuous agent received a discrete action".into(),
            });
        };
        self.buffer.push(Record {
            s: exp.obs.clone(),
            a,
            r: exp.reward,
            s2: exp.next_obs.clone(),
            d: exp.terminal,
        });
        self.steps += 1;
        let ready = self.buffer.len() >= self.config.learning_starts.max(1);
        if ready && self.steps % self.config.train_freq as u64 == 0 {
            for g in 0..self.config.gradient_steps as u64 {
                let records = self.buffer.sample(self.config.batch_size, &mut self.rng);
                let batch = Batch::from_records(&records);
                self.update_on(&batch)?;
                if (self.steps + g) % self.config.target_update_interval as u64 == 0 {
                    self.update_targets();
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::relative_error;
    use proptest::prelude::*;
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn shape(obs_len: usize) -> EnvShape {
        EnvShape {
            obs_len,
            pool_size: 2,
        }
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        for &(mean, log_std, eps) in &[(0.0, 0.0, 0.3), (0.7, -1.2, -1.5), (-2.0, 0.5, 0.9)] {
            let std: f64 = f64::exp(log_std);
            let u: f64 = mean + std * eps;
            let a = u.tanh();
            let normal = Normal::new(mean, std).unwrap();
            let expected =
                statrs::distribution::Continuous::ln_pdf(&normal, u) - (1.0 - a * a).ln();
            assert!((squashed_log_prob(log_std, eps, u) - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn log_prob_finite_at_extremes() {
        for u in [-1e3, -40.0, 40.0, 1e3] {
            assert!(squashed_log_prob(2.0, 0.0, u).is_finite());
            assert!(squashed_log_prob(-20.0, 5.0, u).is_finite());
        }
    }

    /// Finite-difference check of the actor gradient against the loss
    /// evaluated directly from head outputs with fixed noise.
    #[test]
    fn actor_head_grad_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 4;
        let head =
            Array2::from_shape_simple_fn((n, 2 * ACTION_DIM), || rng.random_range(-1.0..1.0));
        let eps = Array2::from_shape_simple_fn((n, ACTION_DIM), || StandardNormal.sample(&mut rng));
        // stand-in critic: q(a) = sum_j w_j a_j + c_j a_j^2
        let w: Vec<f64> = (0..ACTION_DIM)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let c: Vec<f64> = (0..ACTION_DIM)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let alpha = 0.2;
        let loss = |h: &Array2<f64>| {
            let smp = squash(h, eps.clone());
            let mut total = 0.0;
            for i in 0..n {
                let q: f64 = (0..ACTION_DIM)
                    .map(|j| w[j] * smp.action[[i, j]] + c[j] * smp.action[[i, j]].powi(2))
                    .sum();
                total += alpha * smp.log_prob[i] - q;
            }
            total / n as f64
        };
        let smp = squash(&head, eps.clone());
        let dq = Array2::from_shape_fn((n, ACTION_DIM), |(i, j)| {
            w[j] + 2.0 * c[j] * smp.action[[i, j]]
        });
        let grad = actor_head_grad(&smp, &dq, alpha);
        let h = 1e-6;
        for i in 0..n {
            for j in 0..2 * ACTION_DIM {
                let mut p = head.clone();
                p[[i, j]] += h;
                let mut m = head.clone();
                m[[i, j]] -= h;
                let num = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    relative_error(grad[[i, j]], num) < 1e-6,
                    "({i},{j}) {} vs {num}",
                    grad[[i, j]]
                );
            }
        }
    }

    #[test]
    fn zero_entropy_coefficient_gives_clipped_double_target() {
        let cfg = SacConfig {
            ent_coef: 0.0,
            ..Default::default()
        };
        let mut sac = Sac::new(cfg, shape(3), 1).unwrap();
        let obs = |i: usize| Observation {
            activity: vec![u8::from(i == 0), u8::from(i == 1)],
            widgets: vec![1],
        };
        let recs: Vec<Record> = (0..3)
            .map(|i| Record {
                s: obs(i % 2),
                a: [0.0, 0.5, -0.5],
                r: 2.0,
                s2: obs((i + 1) % 2),
                d: false,
            })
            .collect();
        let batch = Batch::from_records(&recs.iter().collect::<Vec<_>>());
        let mut probe = sac.rng.clone();
        let y = sac.target(&batch).unwrap();
        let (next, _) = sac.actor.sample(&batch.s2, &mut probe).unwrap();
        let q1 = sac.critics[0].target_q(&batch.s2, &next.action).unwrap();
        let q2 = sac.critics[1].target_q(&batch.s2, &next.action).unwrap();
        for i in 0..3 {
            assert!((y[i] - (2.0 + 0.99 * q1[i].min(q2[i]))).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_action_is_tanh_mean() {
        let mut sac = Sac::new(SacConfig::default(), shape(4), 2).unwrap();
        let o = Observation {
            activity: vec![0, 1],
            widgets: vec![1, 0],
        };
        let out = sac.actor.net.predict_one(&o.to_input()).unwrap();
        let AgentAction::Continuous(a) = sac.act(&o, false) else {
            unreachable!()
        };
        for k in 0..3 {
            assert_eq!(a[k], out[k].tanh());
        }
        assert_eq!(sac.act(&o, false), sac.act(&o, false));
    }

    /// Two arms with equal reward: entropy regularisation keeps the choice
    /// between them close to a coin flip.
    #[test]
    fn bandit_entropy_does_not_collapse() {
        let mut sac = Sac::new(SacConfig::default(), shape(1), 3).unwrap();
        let o = Observation {
            activity: vec![1],
            widgets: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let recs: Vec<Record> = (0..256)
            .map(|_| Record {
                s: o.clone(),
                a: [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ],
                r: 1.0,
                s2: o.clone(),
                d: true,
            })
            .collect();
        let mut buffer = ReplayBuffer::new(1000);
        for r in recs {
            buffer.push(r);
        }
        for step in 1..=2000u64 {
            let records = buffer.sample(128, &mut rng);
            sac.update_on(&Batch::from_records(&records)).unwrap();
            if step % 10 == 0 {
                sac.update_targets();
            }
        }
        // arm = sign of the first action component = sign of u
        let out = sac.actor.net.predict_one(&[1.0]).unwrap();
        let (mean, std) = (out[0], out[3].exp());
        let p = Normal::new(0.0, 1.0).unwrap().cdf(mean / std);
        let entropy = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        assert!(entropy > 0.5, "entropy {entropy}, p {p}");
    }

    #[test]
    fn trains_on_schedule() {
        let cfg = SacConfig {
            learning_starts: 5,
            batch_size: 4,
            train_freq: 5,
            ..Default::default()
        };
        let mut sac = Sac::new(cfg, shape(2), 4).unwrap();
        let o = Observation {
            activity: vec![1],
            widgets: vec![1],
        };
        let targets0 = sac.critics[0].target.params();
        for step in 1..=20 {
            let a = sac.act(&o, true);
            sac.learn(&Experience {
                obs: &o,
                action: &a,
                executed: crate::env::Action {
                    slot: 0,
                    string: 0,
                    mode: 0,
                },
                reward: -1.0,
                next_obs: &o,
                terminal: false,
                episode_end: false,
            })
            .unwrap();
            if step == 9 {
                assert_eq!(sac.critics[0].target.params(), targets0);
            }
        }
        assert_eq!(sac.updates(), 4);
        assert_ne!(sac.critics[0].target.params(), targets0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sampled_log_prob_is_finite(seed in any::<u64>(), scale in 0.0f64..200.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(4, &[8], ACTION_DIM, Head::Gaussian, &mut rng).unwrap();
            let s = Array2::from_shape_simple_fn((8, 4), || rng.random_range(-scale..=scale));
            let actor = GaussianActor { opt: Adam::new(&net, 1e-3), net };
            let (smp, _) = actor.sample(&s, &mut rng).unwrap();
            prop_assert!(smp.log_prob.iter().all(|v| v.is_finite()));
            prop_assert!(smp.action.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
