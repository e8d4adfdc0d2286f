//! Twin delayed DDPG: clipped double Q targets, delayed policy updates and
//! target policy smoothing.

use ndarray::{Array1, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::actor_critic::{
    bellman_target, explore_deterministic, Actor, Batch, Common, Critic, Record,
};
use super::replay::{ReplayBuffer, DEFAULT_BATCH, DEFAULT_CAPACITY};
use super::{Agent, AgentAction, AgentError, Algorithm, EnvShape, Experience, ACTION_DIM};
use crate::env::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_starts: usize,
    pub random_exploration: f64,
    /// Environment steps between training rounds.
    pub train_freq: usize,
    /// Critic updates per training round.
    pub gradient_steps: usize,
    pub policy_delay: usize,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub action_noise: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            learning_rate: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            buffer_size: DEFAULT_CAPACITY,
            batch_size: DEFAULT_BATCH,
            hidden: vec![64, 64],
            learning_starts: 100,
            random_exploration: 0.8,
            train_freq: 10,
            gradient_steps: 1,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            action_noise: 0.1,
        }
    }
}

impl Td3Config {
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

/// Elementwise `min(q1, q2)`.
pub fn clipped_double(q1: &Array1<f64>, q2: &Array1<f64>) -> Array1<f64> {
    Zip::from(q1).and(q2).map_collect(|&a, &b| a.min(b))
}

#[derive(Debug, Clone)]
pub struct Td3 {
    config: Td3Config,
    pub actor: Actor,
    pub critics: [Critic; 2],
    buffer: ReplayBuffer<Record>,
    rng: ChaCha8Rng,
    steps: u64,
    critic_updates: u64,
}

impl Td3 {
    pub fn new(config: Td3Config, shape: EnvShape, seed: u64) -> Result<Self, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(
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
        Ok(Td3 {
            buffer: ReplayBuffer::new(config.buffer_size),
            config,
            actor,
            critics: [c1, c2],
            rng,
            steps: 0,
            critic_updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.config
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn act_with_source(&mut self, obs: &Observation) -> ([f64; ACTION_DIM], bool) {
        explore_deterministic(
            &self.actor,
            &obs.to_input(),
            self.config.random_exploration,
            self.config.action_noise,
            &mut self.rng,
        )
    }

    /// Target actions `clip(pi'(s') + clip(noise, -c, c), -1, 1)`.
    pub fn smoothed_target_actions(&mut self, s2: &Array2<f64>) -> Result<Array2<f64>, AgentError> {
        let mut a2 = self.actor.target.predict(s2)?;
        let (sigma, c) = (self.config.target_noise, self.config.target_noise_clip);
        for v in a2.iter_mut() {
            let eps: f64 = StandardNormal.sample(&mut self.rng);
            *v = (*v + (sigma * eps).clamp(-c, c)).clamp(-1.0, 1.0);
        }
        Ok(a2)
    }

    pub fn target(&mut self, batch: &Batch) -> Result<Array1<f64>, AgentError> {
        let a2 = self.smoothed_target_actions(&batch.s2)?;
        let q1 = self.critics[0].target_q(&batch.s2, &a2)?;
        let q2 = self.critics[1].target_q(&batch.s2, &a2)?;
        Ok(bellman_target(
            &batch.r,
            &batch.d,
            &clipped_double(&q1, &q2),
            self.config.gamma,
        ))
    }

    /// Both critics regress to the shared target; every `policy_delay`-th
    /// call also moves the actor and all targets.
    pub fn update_on(&mut self, batch: &Batch) -> Result<(), AgentError> {
        let y = self.target(batch)?;
        for c in &mut self.critics {
            c.regress(&batch.s, &batch.a, &y)?;
        }
        self.critic_updates += 1;
        if self.critic_updates % self.config.policy_delay as u64 == 0 {
            self.actor.ascend(&self.critics[0], &batch.s)?;
            self.actor.soft_update(self.config.tau);
            for c in &mut self.critics {
                c.soft_update(self.config.tau);
            }
        }
        Ok(())
    }
}

impl Agent for Td3 {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Td3
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let a = if explore {
            self.act_with_source(obs).0
        } else {
            self.actor.policy(&obs.to_input())
        };
        AgentAction::Continuous(a)
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
            for _ in 0..self.config.gradient_steps {
                let records = self.buffer.sample(self.config.batch_size, &mut self.rng);
                let batch = Batch::from_records(&records);
                self.update_on(&batch)?;
            }
        }
        Ok(())
    }
}
