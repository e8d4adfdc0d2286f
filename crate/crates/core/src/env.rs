//! Episodic exploration environment over an [`AppModel`].
//!
//! Observations are the one-hot current activity followed by the
//! widget-availability mask. Actions are triples (widget or system slot,
//! string-pool index, mode bit). Every step pays exactly one of three rewards:
//! `+gamma1` for reaching an activity not yet seen this episode or for a
//! crash, `-gamma2` for leaving the app, `-gamma3` otherwise.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guard::{self, GuardError, Value, VarStore};
use crate::model::{self, AppModel, Severity, Transition, TransitionKind, EXTERNAL};

/// Number of system-level actions appended after the widget slots.
pub const SYSTEM_ACTIONS: usize = 2;
pub const DEFAULT_EPISODE_LEN: usize = 250;

/// Global variable mirrored by the "toggle internet connection" action.
pub const INTERNET_VAR: &str = "internet_on";
/// Global variable mirrored by the "rotate screen" action.
pub const ROTATION_VAR: &str = "rotated";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is over; call reset before stepping again")]
    EpisodeOver,
    #[error("environment has not been reset")]
    NotReset,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid reward parameters: {0}")]
    InvalidRewards(String),
    #[error("action slot {slot} out of range (have {slots})")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("string index {index} out of range (pool has {pool})")]
    StringOutOfRange { index: usize, pool: usize },
    #[error("node `{node}` transition {transition}: {source}")]
    Guard {
        node: String,
        transition: u32,
        #[source]
        source: GuardError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            gamma1: 1000.0,
            gamma2: 100.0,
            gamma3: 1.0,
        }
    }
}

impl RewardParams {
    /// Requires `gamma1 >= 10 * gamma2 >= 100 * gamma3 > 0`.
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = self.gamma3 > 0.0
            && self.gamma2 >= 10.0 * self.gamma3
            && self.gamma1 >= 10.0 * self.gamma2
            && [self.gamma1, self.gamma2, self.gamma3]
                .iter()
                .all(|g| g.is_finite());
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidRewards(format!(
                "need gamma1 >> gamma2 >> gamma3 > 0, got {}/{}/{}",
                self.gamma1, self.gamma2, self.gamma3
            )))
        }
    }
}

/// Binary state vector: one-hot activity then widget availability.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub activity: Vec<u8>,
    pub widgets: Vec<u8>,
}

/// Compact exact key for tabular agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsKey(Vec<u64>);

impl Observation {
    pub fn len(&self) -> usize {
        self.activity.len() + self.widgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total action slots: widgets followed by the system actions.
    pub fn slot_count(&self) -> usize {
        self.widgets.len() + SYSTEM_ACTIONS
    }

    pub fn slot_available(&self, slot: usize) -> bool {
        match self.widgets.get(slot) {
            Some(&bit) => bit == 1,
            None => slot < self.slot_count(),
        }
    }

    pub fn available_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.slot_count()).filter(|&s| self.slot_available(s))
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        self.activity.iter().chain(self.widgets.iter()).copied()
    }

    pub fn to_input(&self) -> Vec<f64> {
        self.bits().map(f64::from).collect()
    }

    pub fn write_input(&self, out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(self.bits()) {
            *o = f64::from(b);
        }
    }

    pub fn key(&self) -> ObsKey {
        let mut words = vec![0u64; self.len().div_ceil(64)];
        for (i, b) in self.bits().enumerate() {
            if b != 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        ObsKey(words)
    }

    pub fn activity_index(&self) -> Option<usize> {
        self.activity.iter().position(|&b| b == 1)
    }
}

/// A decoded action. Ordering is the tie-breaking order of tabular agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub slot: usize,
    pub string: usize,
    pub mode: u8,
}

fn bucket(raw: f64, n: usize) -> usize {
    let r = if raw.is_nan() {
        -1.0
    } else {
        raw.clamp(-1.0, 1.0)
    };
    (((r + 1.0) / 2.0 * n as f64).floor() as usize).min(n - 1)
}

/// Maps a continuous triple in `[-1, 1]^3` to a discrete action. An
/// unavailable slot is replaced by the nearest available one (ties go to the
/// lower index); the system slots are always available.
pub fn decode_action(raw: [f64; 3], obs: &Observation, pool_size: usize) -> Action {
    let slots = obs.slot_count();
    let wanted = bucket(raw[0], slots);
    let slot = if obs.slot_available(wanted) {
        wanted
    } else {
        (1..slots)
            .flat_map(|d| [wanted.checked_sub(d), Some(wanted + d)])
            .flatten()
            .find(|&s| s < slots && obs.slot_available(s))
            .expect("system slots are always available")
    };
    Action {
        slot,
        string: bucket(raw[1], pool_size.max(1)),
        mode: bucket(raw[2], 2) as u8,
    }
}

/// Builds the observation for `node` given its enabled transitions.
pub fn encode_observation(
    model: &AppModel,
    node: &str,
    enabled: &[&Transition],
) -> Result<Observation, model::ModelError> {
    let idx = model
        .node_index(node)
        .ok_or_else(|| model::ModelError::UnknownNode(node.to_string()))?;
    let mut activity = vec![0u8; model.nodes.len()];
    activity[idx] = 1;
    let mut widgets = vec![0u8; model.max_widget_slots];
    for (slot, t) in model.nodes[idx].transitions.iter().enumerate() {
        if enabled
            .iter()
            .any(|e| std::ptr::eq(*e, t) || e.transition_id == t.transition_id)
        {
            widgets[slot] = 1;
        }
    }
    Ok(Observation { activity, widgets })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashId {
    pub node_id: String,
    pub transition_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepInfo {
    Fired { transition_id: u32 },
    ToggleInternet,
    RotateScreen,
    NoOp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub episode_done: bool,
    pub crash: Option<CrashId>,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub step_in_episode: usize,
    visited_episode: Vec<bool>,
    visited_overall: Vec<bool>,
    pub vars: VarStore,
    pub internet_on: bool,
    pub rotated: bool,
}

impl EpisodeState {
    pub fn visited_this_episode(&self) -> BTreeSet<usize> {
        set_of(&self.visited_episode)
    }

    pub fn visited_overall(&self) -> BTreeSet<usize> {
        set_of(&self.visited_overall)
    }
}

fn set_of(flags: &[bool]) -> BTreeSet<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| i)
        .collect()
}

/// Percentage of app (non-external) nodes visited during the run.
pub fn coverage(state: &EpisodeState, model: &AppModel) -> f64 {
    let total = model.app_node_count();
    if total == 0 {
        return 0.0;
    }
    let hit = model
        .nodes
        .iter()
        .zip(&state.visited_overall)
        .filter(|(n, &v)| v && !n.external)
        .count();
    100.0 * hit as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dest {
    Node(usize),
    External,
}

#[derive(Debug, Clone)]
struct CompiledTransition {
    dest: Dest,
    alt: Option<Dest>,
    crash: bool,
    alt_crash: bool,
}

/// A single exploration run over one model. Not shared between threads;
/// run several instances for parallel experiments.
#[derive(Debug, Clone)]
pub struct Env {
    model: Arc<AppModel>,
    compiled: Vec<Vec<CompiledTransition>>,
    params: RewardParams,
    episode_len: usize,
    initial: usize,
    internet_slot: Option<usize>,
    rotation_slot: Option<usize>,
    app_nodes: usize,
    node: usize,
    state: Option<EpisodeState>,
    overall_hits: usize,
    done: bool,
    episode: usize,
}

impl Env {
    pub fn new(
        model: Arc<AppModel>,
        params: RewardParams,
        episode_len: usize,
    ) -> Result<Self, EnvError> {
        params.validate()?;
        if episode_len == 0 {
            return Err(EnvError::InvalidModel(
                "episode length must be positive".into(),
            ));
        }
        if let Some(d) = model::validate_model(&model)
            .into_iter()
            .find(|d| d.severity == Severity::Error)
        {
            return Err(EnvError::InvalidModel(d.message));
        }
        let resolve = |name: &str| -> Dest {
            if name == EXTERNAL {
                return Dest::External;
            }
            let i = model.node_index(name).expect("validated destination");
            if model.nodes[i].external {
                Dest::External
            } else {
                Dest::Node(i)
            }
        };
        let is_crash_node = |d: Dest| matches!(d, Dest::Node(i) if model.nodes[i].crash_node);
        let mut compiled = Vec::with_capacity(model.nodes.len());
        for n in &model.nodes {
            let mut ts = Vec::with_capacity(n.transitions.len());
            for t in &n.transitions {
                if t.guard
                    .as_ref()
                    .is_some_and(|g| g.root().references_input())
                {
                    return Err(EnvError::InvalidModel(format!(
                        "guard of node `{}` transition {} references {}",
                        n.node_id,
                        t.transition_id,
                        guard::INPUT_SYMBOL
                    )));
                }
                let dest = resolve(&t.destination);
                let alt = t.alt_destination.as_deref().map(resolve);
                ts.push(CompiledTransition {
                    dest,
                    alt,
                    crash: t.crash || is_crash_node(dest),
                    alt_crash: t.crash || alt.is_some_and(is_crash_node),
                });
            }
            compiled.push(ts);
        }
        let int_slot = |name: &str| match model.declarations().lookup(name) {
            Some((slot, guard::ValueType::Int)) => Some(slot),
            _ => None,
        };
        Ok(Env {
            initial: model
                .node_index(&model.initial_node)
                .expect("validated initial node"),
            internet_slot: int_slot(INTERNET_VAR),
            rotation_slot: int_slot(ROTATION_VAR),
            app_nodes: model.app_node_count(),
            compiled,
            params,
            episode_len,
            node: 0,
            state: None,
            overall_hits: 0,
            done: false,
            episode: 0,
            model,
        })
    }

    pub fn with_defaults(model: Arc<AppModel>) -> Result<Self, EnvError> {
        Env::new(model, RewardParams::default(), DEFAULT_EPISODE_LEN)
    }

    pub fn model(&self) -> &Arc<AppModel> {
        &self.model
    }

    pub fn params(&self) -> RewardParams {
        self.params
    }

    pub fn episode_len(&self) -> usize {
        self.episode_len
    }

    pub fn observation_len(&self) -> usize {
        self.model.nodes.len() + self.model.max_widget_slots
    }

    pub fn slot_count(&self) -> usize {
        self.model.max_widget_slots + SYSTEM_ACTIONS
    }

    pub fn pool_size(&self) -> usize {
        self.model.string_pool.len()
    }

    pub fn state(&self) -> Option<&EpisodeState> {
        self.state.as_ref()
    }

    pub fn current_node(&self) -> &str {
        &self.model.nodes[self.node].node_id
    }

    pub fn current_index(&self) -> usize {
        self.node
    }

    /// Episodes started so far in this run (1 after the first reset).
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Restarts the app: variables and per-episode visits are cleared, the
    /// run-wide visited set is kept. The simulator itself is deterministic,
    /// so the seed does not influence the returned observation.
    pub fn reset(&mut self, _seed: u64) -> Observation {
        let n = self.model.nodes.len();
        let mut vars = self.model.initial_vars();
        let overall = match self.state.take() {
            Some(s) => s.visited_overall,
            None => {
                self.overall_hits = 0;
                vec![false; n]
            }
        };
        let internet_on = self
            .internet_slot
            .is_none_or(|slot| vars.values()[slot] != Value::Int(0));
        let rotated = self
            .rotation_slot
            .is_some_and(|slot| vars.values()[slot] != Value::Int(0));
        // keep the declared value if present; otherwise the flag is internal only
        if let Some(slot) = self.internet_slot {
            let name = self.model.declarations().name(slot).to_string();
            vars.set(&name, Value::Int(internet_on as i64))
                .expect("declared int");
        }
        let mut state = EpisodeState {
            step_in_episode: 0,
            visited_episode: vec![false; n],
            visited_overall: overall,
            vars,
            internet_on,
            rotated,
        };
        self.node = self.initial;
        state.visited_episode[self.initial] = true;
        if !state.visited_overall[self.initial] {
            state.visited_overall[self.initial] = true;
            if !self.model.nodes[self.initial].external {
                self.overall_hits += 1;
            }
        }
        self.state = Some(state);
        self.done = false;
        self.episode += 1;
        self.observe()
    }

    /// Starts a fresh run: forgets run-wide coverage as well.
    pub fn restart_run(&mut self, seed: u64) -> Observation {
        self.state = None;
        self.episode = 0;
        self.reset(seed)
    }

    pub fn coverage(&self) -> f64 {
        if self.app_nodes == 0 {
            return 0.0;
        }
        100.0 * self.overall_hits as f64 / self.app_nodes as f64
    }

    fn enabled_mask(&self, state: &EpisodeState) -> Result<Vec<u8>, EnvError> {
        let node = &self.model.nodes[self.node];
        let mut mask = vec![0u8; self.model.max_widget_slots];
        for (slot, t) in node.transitions.iter().enumerate() {
            let on =
                model::transition_enabled(t, &state.vars).map_err(|source| EnvError::Guard {
                    node: node.node_id.clone(),
                    transition: t.transition_id,
                    source,
                })?;
            mask[slot] = on as u8;
        }
        Ok(mask)
    }

    /// Current observation.
    pub fn observe(&self) -> Observation {
        let state = self.state.as_ref().expect("reset before observe");
        let mut activity = vec![0u8; self.model.nodes.len()];
        activity[self.node] = 1;
        let widgets = self
            .enabled_mask(state)
            .expect("guards were checked not to need input");
        Observation { activity, widgets }
    }

    /// Executes one discrete action.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let Some(mut state) = self.state.take() else {
            return Err(EnvError::NotReset);
        };
        let result = self.apply(&mut state, action);
        self.state = Some(state);
        let (reward, crash, info) = result?;

        let state = self.state.as_mut().expect("state restored");
        state.step_in_episode += 1;
        let episode_done = crash.is_some() || state.step_in_episode >= self.episode_len;
        self.done = episode_done;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            episode_done,
            crash,
            info,
        })
    }

    fn apply(
        &mut self,
        state: &mut EpisodeState,
        action: Action,
    ) -> Result<(f64, Option<CrashId>, StepInfo), EnvError> {
        let widgets = self.model.max_widget_slots;
        if action.slot >= widgets + SYSTEM_ACTIONS {
            return Err(EnvError::SlotOutOfRange {
                slot: action.slot,
                slots: widgets + SYSTEM_ACTIONS,
            });
        }
        let pool = self.model.string_pool.len();
        if action.string >= pool {
            return Err(EnvError::StringOutOfRange {
                index: action.string,
                pool,
            });
        }
        let p = self.params;

        if action.slot >= widgets {
            let info = if action.slot == widgets {
                state.internet_on = !state.internet_on;
                self.mirror(state, self.internet_slot, state.internet_on);
                StepInfo::ToggleInternet
            } else {
                state.rotated = !state.rotated;
                self.mirror(state, self.rotation_slot, state.rotated);
                StepInfo::RotateScreen
            };
            return Ok((-p.gamma3, None, info));
        }

        let model = Arc::clone(&self.model);
        let node = &model.nodes[self.node];
        let Some(t) = node.transitions.get(action.slot) else {
            return Ok((-p.gamma3, None, StepInfo::NoOp));
        };
        let enabled =
            model::transition_enabled(t, &state.vars).map_err(|source| EnvError::Guard {
                node: node.node_id.clone(),
                transition: t.transition_id,
                source,
            })?;
        if !enabled {
            return Ok((-p.gamma3, None, StepInfo::NoOp));
        }

        let compiled = &self.compiled[self.node][action.slot];
        let use_alt = action.mode == 1
            && compiled.alt.is_some()
            && matches!(
                t.kind,
                TransitionKind::Button | TransitionKind::LongButton | TransitionKind::Scroll
            );
        let (dest, crash) = if use_alt {
            (compiled.alt.expect("checked"), compiled.alt_crash)
        } else {
            (compiled.dest, compiled.crash)
        };

        let input = model.string_pool[action.string].as_str();
        guard::exec_set_in_place(t.assignments(), &mut state.vars, Some(input)).map_err(
            |source| EnvError::Guard {
                node: node.node_id.clone(),
                transition: t.transition_id,
                source,
            },
        )?;
        // keep the system flags in sync if a transition assigned them
        if let Some(slot) = self.internet_slot {
            state.internet_on = state.vars.values()[slot] != Value::Int(0);
        }
        if let Some(slot) = self.rotation_slot {
            state.rotated = state.vars.values()[slot] != Value::Int(0);
        }

        let info = StepInfo::Fired {
            transition_id: t.transition_id,
        };
        if crash {
            let id = CrashId {
                node_id: node.node_id.clone(),
                transition_id: t.transition_id,
            };
            return Ok((p.gamma1, Some(id), info));
        }
        match dest {
            // leaving the app: penalise, then press back
            Dest::External => Ok((-p.gamma2, None, info)),
            Dest::Node(j) => {
                self.node = j;
                let reward = if state.visited_episode[j] {
                    -p.gamma3
                } else {
                    state.visited_episode[j] = true;
                    p.gamma1
                };
                if !state.visited_overall[j] {
                    state.visited_overall[j] = true;
                    self.overall_hits += 1;
                }
                Ok((reward, None, info))
            }
        }
    }

    fn mirror(&self, state: &mut EpisodeState, slot: Option<usize>, on: bool) {
        if let Some(slot) = slot {
            let name = self.model.declarations().name(slot).to_string();
            state
                .vars
                .set(&name, Value::Int(on as i64))
                .expect("declared int");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use proptest::prelude::*;

    /// start -> a (new), a -> a (self loop), a -> external, a -> crash.
    fn three_node() -> Arc<AppModel> {
        let doc = r#"{
          "global_vars": [{"name": "flag", "value": 0}],
          "nodes": [
            {"node_id": "start", "transitions": [
              {"transition_id": 0, "type": "button", "active": true, "guard": null, "set": null, "destination": "a"},
              {"transition_id": 1, "type": "button", "active": true, "guard": "flag == 1", "set": null, "destination": "b"}
            ]},
            {"node_id": "a", "transitions": [
              {"transition_id": 0, "type": "button", "active": true, "guard": null, "set": null, "destination": "a"},
              {"transition_id": 1, "type": "button", "active": true, "guard": null, "set": null, "destination": "__external__"},
              {"transition_id": 2, "type": "button", "active": true, "guard": null, "set": null, "destination": "start", "crash": true},
              {"transition_id": 3, "type": "button", "active": true, "guard": null, "set": null, "destination": "start"}
            ]},
            {"node_id": "b", "transitions": [
              {"transition_id": 0, "type": "scroll", "active": true, "guard": null, "set": ["flag = 0"], "destination": "start", "alt_destination": "a"}
            ]}
          ],
          "initial_node": "start",
          "string_pool": ["x", "y"],
          "max_widget_slots": 4
        }"#;
        Arc::new(parse_model(doc).unwrap())
    }

    fn act(slot: usize) -> Action {
        Action {
            slot,
            string: 0,
            mode: 0,
        }
    }

    #[test]
    fn reset_observation() {
        let mut env = Env::with_defaults(three_node()).unwrap();
        let o = env.reset(1);
        assert_eq!(o.activity, vec![1, 0, 0]);
        assert_eq!(o.widgets, vec![1, 0, 0, 0]);
        assert_eq!(o, env.reset(1));
    }

    #[test]
    fn decode_examples() {
        let obs = Observation {
            activity: vec![1],
            widgets: vec![1; 10],
        };
        assert_eq!(
            decode_action([-1.0, -1.0, -1.0], &obs, 20),
            Action {
                slot: 0,
                string: 0,
                mode: 0
            }
        );
        assert_eq!(
            decode_action([1.0, 1.0, 1.0], &obs, 20),
            Action {
                slot: 11,
                string: 19,
                mode: 1
            }
        );
        assert_eq!(
            decode_action([0.0, 0.0, 0.0], &obs, 20),
            Action {
                slot: 6,
                string: 10,
                mode: 1
            }
        );
        // slot 6 wanted but only 4 and 8 available: tie -> lower
        let sparse = Observation {
            activity: vec![1],
            widgets: vec![0, 0, 0, 0, 1, 0, 0, 0, 1, 0],
        };
        assert_eq!(decode_action([0.0, 0.0, -1.0], &sparse, 20).slot, 4);
        // nothing available nearby: falls through to a system slot
        let none = Observation {
            activity: vec![1],
            widgets: vec![0; 10],
        };
        assert_eq!(decode_action([-1.0, 0.0, 0.0], &none, 20).slot, 10);
    }

    #[test]
    fn encode_examples() {
        let doc = r#"{"global_vars": [], "nodes": [
            {"node_id": "n0", "transitions": []},
            {"node_id": "n1", "transitions": []},
            {"node_id": "n2", "transitions": [
              {"transition_id": 0, "type": "button", "active": true, "guard": null, "set": null, "destination": "n0"},
              {"transition_id": 1, "type": "button", "active": true, "guard": null, "set": null, "destination": "n0"},
              {"transition_id": 2, "type": "button", "active": true, "guard": null, "set": null, "destination": "n0"},
              {"transition_id": 3, "type": "button", "active": true, "guard": null, "set": null, "destination": "n3"}
            ]},
            {"node_id": "n3", "transitions": []}
          ], "initial_node": "n2", "string_pool": ["s"], "max_widget_slots": 5}"#;
        let m = parse_model(doc).unwrap();
        let ts = &m.nodes[2].transitions;
        let o = encode_observation(&m, "n2", &[&ts[0], &ts[3]]).unwrap();
        let bits: Vec<u8> = o.bits().collect();
        assert_eq!(bits, vec![0, 0, 1, 0, 1, 0, 0, 1, 0]);
        let o = encode_observation(&m, "n0", &[]).unwrap();
        assert_eq!(o.widgets, vec![0; 5]);
    }

    #[test]
    fn reward_branches() {
        let mut env = Env::with_defaults(three_node()).unwrap();
        env.reset(0);
        let r = env.step(act(0)).unwrap();
        assert_eq!(r.reward, 1000.0);
        assert_eq!(env.current_node(), "a");
        let r = env.step(act(0)).unwrap();
        assert_eq!(r.reward, -1.0);
        let r = env.step(act(1)).unwrap();
        assert_eq!(r.reward, -100.0);
        assert_eq!(env.current_node(), "a");
        assert!(!r.episode_done);
        // back to start: already seen this episode
        let r = env.step(act(3)).unwrap();
        assert_eq!(r.reward, -1.0);
        // disabled slot is a no-op
        let r = env.step(act(1)).unwrap();
        assert_eq!((r.reward, r.info), (-1.0, StepInfo::NoOp));
        // system action
        let r = env.step(act(4)).unwrap();
        assert_eq!((r.reward, r.info), (-1.0, StepInfo::ToggleInternet));
        env.step(act(0)).unwrap();
        let r = env.step(act(2)).unwrap();
        assert_eq!(r.reward, 1000.0);
        assert!(r.episode_done);
        assert_eq!(
            r.crash,
            Some(CrashId {
                node_id: "a".into(),
                transition_id: 2
            })
        );
        assert!(matches!(env.step(act(0)), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn episode_reset_clears_only_episode_visits() {
        let mut env = Env::new(three_node(), RewardParams::default(), 3).unwrap();
        env.reset(0);
        env.step(act(0)).unwrap();
        env.step(act(0)).unwrap();
        let r = env.step(act(0)).unwrap();
        assert!(r.episode_done);
        let cov = env.coverage();
        env.reset(0);
        assert_eq!(
            env.state().unwrap().visited_this_episode(),
            BTreeSet::from([0])
        );
        assert_eq!(
            env.state().unwrap().visited_overall(),
            BTreeSet::from([0, 1])
        );
        assert_eq!(env.coverage(), cov);
        assert_eq!(env.step(act(0)).unwrap().reward, 1000.0);
    }

    #[test]
    fn scroll_direction_uses_mode() {
        let m = three_node();
        let mut env = Env::with_defaults(m.clone()).unwrap();
        env.reset(0);
        // unlock b
        let mut st = env.state.take().unwrap();
        st.vars.set("flag", Value::Int(1)).unwrap();
        env.state = Some(st);
        assert_eq!(env.step(act(1)).unwrap().reward, 1000.0);
        assert_eq!(env.current_node(), "b");
        let r = env
            .step(Action {
                slot: 0,
                string: 0,
                mode: 1,
            })
            .unwrap();
        assert_eq!(env.current_node(), "a");
        assert_eq!(r.reward, 1000.0);
        assert_eq!(env.state().unwrap().vars.get("flag"), Some(&Value::Int(0)));
    }

    #[test]
    fn coverage_examples() {
        let m = three_node();
        let mut env = Env::with_defaults(m.clone()).unwrap();
        env.reset(0);
        let st = env.state().unwrap().clone();
        assert!((coverage(&st, &m) - 100.0 / 3.0).abs() < 1e-12);
        env.step(act(0)).unwrap();
        assert!((env.coverage() - 200.0 / 3.0).abs() < 1e-12);

        let mut st = st;
        st.visited_overall = vec![true; 3];
        assert_eq!(coverage(&st, &m), 100.0);
    }

    #[test]
    fn coverage_three_of_eight() {
        let nodes: Vec<String> = (0..8)
            .map(|i| {
                format!(
                    r#"{{"node_id": "n{i}", "transitions": [{{"transition_id": 0, "type": "button", "active": true, "guard": null, "set": null, "destination": "n{}"}}]}}"#,
                    (i + 1) % 8
                )
            })
            .collect();
        let doc = format!(
            r#"{{"global_vars": [], "nodes": [{}], "initial_node": "n0", "string_pool": ["s"], "max_widget_slots": 1}}"#,
            nodes.join(",")
        );
        let m = Arc::new(parse_model(&doc).unwrap());
        let mut env = Env::with_defaults(m).unwrap();
        env.reset(0);
        env.step(act(0)).unwrap();
        env.step(act(0)).unwrap();
        assert_eq!(env.coverage(), 37.5);
    }

    #[test]
    fn rejects_bad_rewards() {
        let p = RewardParams {
            gamma1: 100.0,
            gamma2: 100.0,
            gamma3: 1.0,
        };
        assert!(Env::new(three_node(), p, 250).is_err());
    }

    proptest! {
        #[test]
        fn decode_is_total_and_available(
            raw in proptest::array::uniform3(-1.0f64..=1.0),
            mask in proptest::collection::vec(0u8..=1, 1..12),
            pool in 1usize..50,
        ) {
            let obs = Observation { activity: vec![1], widgets: mask };
            let a = decode_action(raw, &obs, pool);
            prop_assert!(a.slot < obs.slot_count());
            prop_assert!(obs.slot_available(a.slot));
            prop_assert!(a.string < pool);
            prop_assert!(a.mode <= 1);
        }

        #[test]
        fn rewards_partition_and_coverage_monotone(actions in proptest::collection::vec((0usize..6, 0usize..2, 0u8..2), 1..300)) {
            let mut env = Env::new(three_node(), RewardParams::default(), 50).unwrap();
            env.reset(0);
            let mut cov = env.coverage();
            for (slot, string, mode) in actions {
                if env.is_done() {
                    env.reset(0);
                }
                let r = env.step(Action { slot, string, mode }).unwrap();
                prop_assert!([1000.0, -100.0, -1.0].contains(&r.reward));
                prop_assert!(env.coverage() >= cov);
                cov = env.coverage();
                let st = env.state().unwrap();
                prop_assert!(st.visited_this_episode().is_subset(&st.visited_overall()));
            }
        }
    }
}
