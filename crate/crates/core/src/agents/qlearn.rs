//! Tabular Q-learning with epsilon-greedy selection.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::random::random_action;
use super::{Agent, AgentAction, AgentError, Algorithm, EnvShape, Experience};
use crate::env::{Action, ObsKey, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            alpha: 0.628,
            gamma: 0.9,
            epsilon: 0.8,
        }
    }
}

/// Lazily populated action-value table; missing entries read as 0.
#[derive(Debug, Clone)]
pub struct QTable<S, A> {
    values: HashMap<S, HashMap<A, f64>>,
}

impl<S, A> Default for QTable<S, A> {
    fn default() -> Self {
        QTable {
            values: HashMap::new(),
        }
    }
}

impl<S: Hash + Eq + Clone, A: Hash + Eq + Copy> QTable<S, A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: &S, a: &A) -> f64 {
        self.values
            .get(s)
            .and_then(|row| row.get(a))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, s: &S, a: A, value: f64) {
        self.values.entry(s.clone()).or_default().insert(a, value);
    }

    /// Number of stored (state, action) entries.
    pub fn len(&self) -> usize {
        self.values.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = (&S, &A, f64)> {
        self.values
            .iter()
            .flat_map(|(s, row)| row.iter().map(move |(a, v)| (s, a, *v)))
    }

    /// Max over `actions`; 0 when there are none.
    pub fn max_value(&self, s: &S, actions: impl IntoIterator<Item = A>) -> f64 {
        let row = self.values.get(s);
        actions
            .into_iter()
            .map(|a| row.and_then(|r| r.get(&a)).copied().unwrap_or(0.0))
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    /// Argmax over `actions`, which must come in key order: the first
    /// maximum wins, so ties go to the lowest key.
    pub fn greedy(&self, s: &S, actions: impl IntoIterator<Item = A>) -> Option<A> {
        let row = self.values.get(s);
        let mut best: Option<(A, f64)> = None;
        for a in actions {
            let v = row.and_then(|r| r.get(&a)).copied().unwrap_or(0.0);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a)
    }

    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`, with the
    /// bootstrap dropped for terminal `s'`. Returns the new value.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        s: &S,
        a: A,
        reward: f64,
        next: &S,
        next_actions: impl IntoIterator<Item = A>,
        terminal: bool,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let bootstrap = if terminal {
            0.0
        } else {
            self.max_value(next, next_actions)
        };
        let old = self.get(s, &a);
        let new = q_update(old, reward, bootstrap, alpha, gamma);
        self.set(s, a, new);
        new
    }
}

/// The scalar update rule.
pub fn q_update(q: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    q + alpha * (reward + gamma * max_next - q)
}

/// All available actions in key order.
pub fn available_actions(obs: &Observation, pool_size: usize) -> impl Iterator<Item = Action> + '_ {
    obs.available_slots().flat_map(move |slot| {
        (0..pool_size)
            .flat_map(move |string| (0..2u8).map(move |mode| Action { slot, string, mode }))
    })
}

#[derive(Debug, Clone)]
pub struct QLearning {
    config: QLearningConfig,
    pool_size: usize,
    table: QTable<ObsKey, Action>,
    rng: ChaCha8Rng,
}

impl QLearning {
    pub fn new(config: QLearningConfig, shape: EnvShape, seed: u64) -> Self {
        QLearning {
            config,
            pool_size: shape.pool_size,
            table: QTable::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn table(&self) -> &QTable<ObsKey, Action> {
        &self.table
    }

    pub fn epsilon_greedy(&mut self, obs: &Observation) -> Action {
        if self.rng.random::<f64>() < self.config.epsilon {
            random_action(obs, self.pool_size, &mut self.rng)
        } else {
            self.table
                .greedy(&obs.key(), available_actions(obs, self.pool_size))
                .expect("system actions are always available")
        }
    }
}

impl Agent for QLearning {
    fn algorithm(&self) -> Algorithm {
        Algorithm::QLearning
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction {
        let a = if explore {
            self.epsilon_greedy(obs)
        } else {
            self.table
                .greedy(&obs.key(), available_actions(obs, self.pool_size))
                .expect("system actions are always available")
        };
        AgentAction::Discrete(a)
    }

    fn learn(&mut self, exp: &Experience<'_>) -> Result<(), AgentError> {
        let QLearningConfig { alpha, gamma, .. } = self.config;
        self.table.update(
            &exp.obs.key(),
            exp.executed,
            exp.reward,
            &exp.next_obs.key(),
            available_actions(exp.next_obs, self.pool_size),
            exp.terminal,
            alpha,
            gamma,
        );
        Ok(())
    }
}
