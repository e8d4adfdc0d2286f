//! Exact planning on small MDPs, used as a reference for the learners.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::env::{Action, Env, EnvError, RewardParams};
use crate::guard::Value;
use crate::model::AppModel;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state space exceeds {limit} state-action pairs")]
    TooLarge { limit: usize },
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("gamma must lie in [0, 1), got {0}")]
    Gamma(f64),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
    /// `None` ends the episode.
    pub next: Option<usize>,
}

/// A finite MDP with explicit transition probabilities.
pub trait FiniteMdp {
    fn num_states(&self) -> usize;
    fn num_actions(&self, state: usize) -> usize;
    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome>;
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Sup-norm change per sweep.
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn greedy(&self, state: usize) -> Option<usize> {
        let row = &self.q[state];
        (0..row.len()).fold(None, |best, a| match best {
            Some(b) if row[b] >= row[a] => Some(b),
            _ => Some(a),
        })
    }
}

/// Synchronous value iteration until the sup-norm change drops below `tol`.
/// States without actions are worth 0.
pub fn value_iteration<M: FiniteMdp + ?Sized>(
    mdp: &M,
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<Solution, OracleError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::Gamma(gamma));
    }
    let n = mdp.num_states();
    let model: Vec<Vec<Vec<Outcome>>> = (0..n)
        .map(|s| {
            (0..mdp.num_actions(s))
                .map(|a| mdp.outcomes(s, a))
                .collect()
        })
        .collect();
    let backup = |v: &[f64], outs: &[Outcome]| -> f64 {
        outs.iter()
            .map(|o| o.prob * (o.reward + o.next.map_or(0.0, |j| gamma * v[j])))
            .sum()
    };
    let mut v = vec![0.0; n];
    let mut residuals = Vec::new();
    loop {
        let next: Vec<f64> = model
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|o| backup(&v, o))
                    .fold(None, |m: Option<f64>, q| Some(m.map_or(q, |m| m.max(q))))
                    .unwrap_or(0.0)
            })
            .collect();
        let residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        residuals.push(residual);
        if residual < tol {
            break;
        }
        if residuals.len() >= max_sweeps {
            return Err(OracleError::NoConvergence {
                iterations: residuals.len(),
                residual,
            });
        }
    }
    let q = model
        .iter()
        .map(|acts| acts.iter().map(|o| backup(&v, o)).collect())
        .collect();
    Ok(Solution { v, q, residuals })
}

/// Corridor of `len` cells; action 0 steps left, 1 steps right. Each step
/// costs 1, stepping right out of the second-to-last cell pays `goal` and
/// ends the episode. The last cell is unreachable and has no actions.
#[derive(Debug, Clone, Copy)]
pub struct ChainMdp {
    pub len: usize,
    pub goal: f64,
    pub step_cost: f64,
}

impl ChainMdp {
    pub fn new(len: usize) -> Self {
        ChainMdp {
            len,
            goal: 1000.0,
            step_cost: 1.0,
        }
    }

    /// Deterministic successor for tabular learners: `(reward, next)`.
    pub fn step(&self, state: usize, action: usize) -> (f64, Option<usize>) {
        let o = self.outcomes(state, action)[0];
        (o.reward, o.next)
    }
}

impl FiniteMdp for ChainMdp {
    fn num_states(&self) -> usize {
        self.len
    }

    fn num_actions(&self, state: usize) -> usize {
        if state + 1 >= self.len {
            0
        } else {
            2
        }
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        let (reward, next) = if action == 1 {
            if state + 2 == self.len {
                (self.goal, None)
            } else {
                (-self.step_cost, Some(state + 1))
            }
        } else {
            (-self.step_cost, Some(state.saturating_sub(1)))
        };
        vec![Outcome {
            prob: 1.0,
            reward,
            next,
        }]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct StateKey {
    node: usize,
    visited: BTreeSet<usize>,
    vars: Vec<Value>,
    internet_on: bool,
    rotated: bool,
}

/// One enumerated simulator state.
#[derive(Debug, Clone)]
pub struct AppState {
    pub node: usize,
    pub visited: BTreeSet<usize>,
    pub vars: Vec<Value>,
    pub internet_on: bool,
    pub rotated: bool,
}

/// Reachable part of an app model's episode dynamics, with the per-episode
/// visited set folded into the state and no step limit.
#[derive(Debug, Clone)]
pub struct AppMdp {
    pub states: Vec<AppState>,
    pub actions: Vec<Action>,
    /// `edges[s][a]`: reward and successor (`None` after a crash).
    pub edges: Vec<Vec<(f64, Option<usize>)>>,
    /// True when `max_states` cut the search short.
    pub truncated: bool,
}

impl AppMdp {
    /// Enumerates every state reachable from the initial node using the
    /// given pool indices; fails when the action table would exceed
    /// `max_pairs` entries.
    pub fn build(
        model: Arc<AppModel>,
        params: RewardParams,
        strings: &[usize],
        max_pairs: usize,
    ) -> Result<Self, OracleError> {
        let mdp = Self::explore(model, params, strings, usize::MAX, max_pairs)?;
        Ok(mdp)
    }

    /// Like `build` but stops expanding after `max_states` states instead of
    /// failing; the result is flagged `truncated`.
    pub fn explore_bounded(
        model: Arc<AppModel>,
        params: RewardParams,
        strings: &[usize],
        max_states: usize,
    ) -> Result<Self, OracleError> {
        Self::explore(model, params, strings, max_states, usize::MAX)
    }

    fn explore(
        model: Arc<AppModel>,
        params: RewardParams,
        strings: &[usize],
        max_states: usize,
        max_pairs: usize,
    ) -> Result<Self, OracleError> {
        let mut root = Env::new(model, params, usize::MAX)?;
        root.reset(0);
        let slots = root.slot_count();
        let actions: Vec<Action> = (0..slots)
            .flat_map(|slot| {
                strings.iter().flat_map(move |&string| {
                    (0..2u8).map(move |mode| Action { slot, string, mode })
                })
            })
            .collect();

        let mut search = Search {
            index: HashMap::new(),
            envs: Vec::new(),
            states: Vec::new(),
            queue: VecDeque::new(),
            max_states,
            truncated: false,
        };
        search.intern(root);
        let mut edges: Vec<Vec<(f64, Option<usize>)>> = Vec::new();
        while let Some(s) = search.queue.pop_front() {
            if (s + 1) * actions.len() > max_pairs {
                return Err(OracleError::TooLarge { limit: max_pairs });
            }
            let mut row = Vec::with_capacity(actions.len());
            for &a in &actions {
                let mut env = search.envs[s].clone();
                let r = env.step(a)?;
                let next = if r.crash.is_some() {
                    None
                } else {
                    search.intern(env)
                };
                row.push((r.reward, next));
            }
            if edges.len() <= s {
                edges.resize(s + 1, Vec::new());
            }
            edges[s] = row;
        }
        let Search {
            states, truncated, ..
        } = search;
        Ok(AppMdp {
            states,
            actions,
            edges,
            truncated,
        })
    }

    pub fn pairs(&self) -> usize {
        self.states.len() * self.actions.len()
    }

    /// Model nodes appearing in any enumerated state.
    pub fn reachable_nodes(&self) -> BTreeSet<usize> {
        self.states.iter().map(|s| s.node).collect()
    }
}

struct Search {
    index: HashMap<StateKey, usize>,
    envs: Vec<Env>,
    states: Vec<AppState>,
    queue: VecDeque<usize>,
    max_states: usize,
    truncated: bool,
}

impl Search {
    fn intern(&mut self, env: Env) -> Option<usize> {
        let st = env.state().expect("reset");
        let key = StateKey {
            node: env.current_index(),
            visited: st.visited_this_episode(),
            vars: st.vars.values().to_vec(),
            internet_on: st.internet_on,
            rotated: st.rotated,
        };
        if let Some(&i) = self.index.get(&key) {
            return Some(i);
        }
        if self.states.len() >= self.max_states {
            self.truncated = true;
            return None;
        }
        let i = self.states.len();
        self.states.push(AppState {
            node: key.node,
            visited: key.visited.clone(),
            vars: key.vars.clone(),
            internet_on: key.internet_on,
            rotated: key.rotated,
        });
        self.index.insert(key, i);
        self.envs.push(env);
        self.queue.push_back(i);
        Some(i)
    }
}

impl FiniteMdp for AppMdp {
    fn num_states(&self) -> usize {
        self.states.len()
    }

    fn num_actions(&self, _state: usize) -> usize {
        self.actions.len()
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        let (reward, next) = self.edges[state][action];
        vec![Outcome {
            prob: 1.0,
            reward,
            next,
        }]
    }
}
