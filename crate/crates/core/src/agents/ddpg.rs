//! Deep deterministic policy gradient.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor_critic::{
    bellman_target, explore_deterministic, Actor, Batch, Common, Critic, Record,
};
use super::replay::{ReplayBuffer, DEFAULT_BATCH, DEFAULT_CAPACITY};
use super::{Agent, AgentAction, AgentError, Algorithm, EnvShape, Experience, ACTION_DIM};
use crate::env::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_starts: usize,
    pub random_exploration: f64,
    /// Gradient updates per training round.
    pub nb_train_steps: usize,
    /// Environment steps between training rounds.
    pub nb_rollout_steps: usize,
    pub action_noise: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            learning_rate: 1e-4,
            gamma: 0.99,
            tau: 0.005,
            buffer_size: DEFAULT_CAPACITY,
            batch_size: DEFAULT_BATCH,
            hidden: vec![64, 64],
            learning_starts: 100,
            random_exploration: 0.7,
            nb_train_steps: 10,
            nb_rollout_steps: 100,
            action_noise: 0.1,
        }
    }
}

impl DdpgConfig {
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

#[derive(Debug, Clone)]
pub struct Ddpg {
    config: DdpgConfig,
    pub actor: Actor,
    pub critic: Critic,
    buffer: ReplayBuffer<Record>,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl Ddpg {
    pub fn new(config: DdpgConfig, shape: EnvShape, seed: u64) -> Result<Self, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(
            shape.obs_len,
            &config.hidden,
            config.learning_rate,
            &mut rng,
        )?;
        let critic = Critic::new(
            shape.obs_len,
            &config.hidden,
            config.learning_rate,
            &mut rng,
        )?;
        Ok(Ddpg {
            buffer: ReplayBuffer::new(config.buffer_size),
            config,
            actor,
            critic,
            rng,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Exploratory action plus whether it came from the uniform branch.
    pub fn act_with_source(&mut self, obs: &Observation) -> ([f64; ACTION_DIM], bool) {
        explore_deterministic(
            &self.actor,
            &obs.to_input(),
            self.config.random_exploration,
            self.config.action_noise,
            &mut self.rng,
        )
    }

    /// `r + gamma * (1 - d) * Q'(s', pi'(s'))`.
    pub fn target(&self, batch: &Batch) -> Result<Array1<f64>, AgentError> {
        let a2 = self.actor.target.predict(&batch.s2)?;
        let q2 = self.critic.target_q(&batch.s2, &a2)?;
        Ok(bellman_target(&batch.r, &batch.d, &q2, self.config.gamma))
    }

    /// One critic step, one actor step and the soft target updates. Returns
    /// the critic loss.
    pub fn update_on(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let y = self.target(batch)?;
        let loss = self.critic.regress(&batch.s, &batch.a, &y)?;
        self.actor.ascend(&self.critic, &batch.s)?;
        self.critic.soft_update(self.config.tau);
        self.actor.soft_update(self.config.tau);
        self.updates += 1;
        Ok(loss)
    }

    fn train_round(&mut self) -> Result<(), AgentError> {
        for _ in 0..self.config.nb_train_steps {
            let records = self.buffer.sample(self.config.batch_size, &mut self.rng);
            let batch = Batch::from_records(&records);
            self.update_on(&batch)?;
        }
        Ok(())
    }
}

impl Agent for Ddpg {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ddpg
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
        if ready && self.steps % self.config.nb_rollout_steps as u64 == 0 {
            self.train_round()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::actor_critic::Record;

    fn shape() -> EnvShape {
        EnvShape {
            obs_len: 6,
            pool_size: 4,
        }
    }

    fn obs(i: usize) -> Observation {
        let mut activity = vec![0; 3];
        activity[i % 3] = 1;
        Observation {
            activity,
            widgets: vec![1, 0, 1],
        }
    }

    #[test]
    fn random_fraction_matches_binomial() {
        let mut agent = Ddpg::new(DdpgConfig::default(), shape(), 3).unwrap();
        let o = obs(0);
        let n = 10_000.0;
        let random = (0..10_000).filter(|_| agent.act_with_source(&o).1).count() as f64;
        let p = 0.7;
        assert!(
            (random - n * p).abs() < 3.0 * (n * p * (1.0 - p)).sqrt(),
            "{random}"
        );
    }

    #[test]
    fn fully_random_is_uniform() {
        let cfg = DdpgConfig {
            random_exploration: 1.0,
            ..Default::default()
        };
        let mut agent = Ddpg::new(cfg, shape(), 4).unwrap();
        let o = obs(1);
        let mut sum = [0.0; 3];
        let mut below = [0usize; 3];
        for _ in 0..10_000 {
            let (a, random) = agent.act_with_source(&o);
            assert!(random);
            for k in 0..3 {
                sum[k] += a[k];
                below[k] += usize::from(a[k] < 0.0);
            }
        }
        for k in 0..3 {
            // uniform on [-1, 1]: mean 0 (sd 0.0058), half below zero
            assert!((sum[k] / 10_000.0).abs() < 0.03);
            assert!((below[k] as f64 - 5000.0).abs() < 150.0);
        }
    }

    #[test]
    fn actions_stay_in_box() {
        let cfg = DdpgConfig {
            random_exploration: 0.0,
            action_noise: 5.0,
            ..Default::default()
        };
        let mut agent = Ddpg::new(cfg, shape(), 5).unwrap();
        for i in 0..500 {
            let AgentAction::Continuous(a) = agent.act(&obs(i), true) else {
                unreachable!()
            };
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn critic_loss_decreases_on_frozen_buffer() {
        let mut agent = Ddpg::new(DdpgConfig::default(), shape(), 6).unwrap();
        let rec = Record {
            s: obs(0),
            a: [0.3, -0.2, 0.5],
            r: 1000.0,
            s2: obs(1),
            d: true,
        };
        let batch = Batch::from_records(&[&rec]);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = agent.update_on(&batch).unwrap();
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut agent = Ddpg::new(DdpgConfig::default(), shape(), 7).unwrap();
        let rec = Record {
            s: obs(0),
            a: [0.3, -0.2, 0.5],
            r: 1.0,
            s2: obs(1),
            d: false,
        };
        let batch = Batch::from_records(&[&rec]);
        agent.update_on(&batch).unwrap();
        let before = agent.critic.target.params();
        agent.critic.soft_update(0.0);
        assert_eq!(agent.critic.target.params(), before);
        agent.critic.soft_update(1.0);
        assert_eq!(agent.critic.target.params(), agent.critic.net.params());
    }

    #[test]
    fn target_matches_hand_computation() {
        let agent = Ddpg::new(DdpgConfig::default(), shape(), 8).unwrap();
        let rec = Record {
            s: obs(0),
            a: [0.0; 3],
            r: -1.0,
            s2: obs(2),
            d: false,
        };
        let batch = Batch::from_records(&[&rec]);
        let s2 = obs(2).to_input();
        let a2 = agent.actor.target.predict_one(&s2).unwrap();
        let mut sa = s2.clone();
        sa.extend(a2);
        let q = agent.critic.target.predict_one(&sa).unwrap()[0];
        let y = agent.target(&batch).unwrap()[0];
        assert!((y - (-1.0 + 0.99 * q)).abs() < 1e-12);
    }

    #[test]
    fn trains_every_rollout_round() {
        let cfg = DdpgConfig {
            learning_starts: 10,
            nb_rollout_steps: 20,
            nb_train_steps: 3,
            batch_size: 8,
            ..Default::default()
        };
        let mut agent = Ddpg::new(cfg, shape(), 9).unwrap();
        for i in 0..100 {
            let (o, o2) = (obs(i), obs(i + 1));
            let action = agent.act(&o, true);
            agent
                .learn(&Experience {
                    obs: &o,
                    action: &action,
                    executed: crate::env::Action {
                        slot: 0,
                        string: 0,
                        mode: 0,
                    },
                    reward: -1.0,
                    next_obs: &o2,
                    terminal: false,
                    episode_end: false,
                })
                .unwrap();
        }
        assert_eq!(agent.updates(), 5 * 3);
    }
}
