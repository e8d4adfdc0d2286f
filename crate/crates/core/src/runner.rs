//! Runs one agent against one model for a fixed step budget.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{AgentAction, AgentConfig, AgentError, Algorithm, EnvShape, Experience};
use crate::env::{
    decode_action, Action, CrashId, Env, EnvError, RewardParams, DEFAULT_EPISODE_LEN,
};
use crate::model::AppModel;
use crate::stats;

pub const DEFAULT_STEPS: usize = 4000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("trace output: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("step budget must be positive")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSettings {
    pub steps: usize,
    pub episode_len: usize,
    pub rewards: RewardParams,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            steps: DEFAULT_STEPS,
            episode_len: DEFAULT_EPISODE_LEN,
            rewards: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based step within the run.
    pub step: usize,
    /// 1-based episode number.
    pub episode: usize,
    /// Node the step ended on.
    pub node: String,
    pub action: Action,
    pub reward: f64,
    pub coverage: f64,
    pub crash: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    /// Configuration label; the algorithm name unless a grid cell was used.
    pub label: String,
    pub preset: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub crashes: BTreeSet<CrashId>,
    pub episode_lengths: Vec<usize>,
    pub duration_secs: f64,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    run_id: &'a str,
    step: usize,
    episode: usize,
    node: &'a str,
    action_slot: usize,
    string_index: usize,
    mode: u8,
    reward: f64,
    coverage: f64,
    crash_flag: u8,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        format!("{}:{}", self.label, self.seed)
    }

    pub fn coverage(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.coverage).collect()
    }

    pub fn final_coverage(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.coverage)
    }

    pub fn auc(&self) -> f64 {
        stats::auc(&self.coverage()).unwrap_or(0.0)
    }

    pub fn episodes(&self) -> usize {
        self.episode_lengths.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Checks the step budget, episode bookkeeping and monotone coverage.
    pub fn verify(&self, settings: &RunSettings) -> Result<(), String> {
        if self.steps.len() != settings.steps {
            return Err(format!(
                "{} steps recorded, budget is {}",
                self.steps.len(),
                settings.steps
            ));
        }
        if let Some(w) = self
            .steps
            .windows(2)
            .find(|w| w[1].coverage < w[0].coverage)
        {
            return Err(format!("coverage fell at step {}", w[1].step));
        }
        if self.episode_lengths.iter().sum::<usize>() != settings.steps {
            return Err("episode lengths do not add up to the step budget".into());
        }
        let crash_episodes = self.steps.iter().filter(|s| s.crash).count();
        let (last, full) = self
            .episode_lengths
            .split_last()
            .expect("at least one episode");
        let short = full.iter().filter(|&&l| l < settings.episode_len).count();
        if full.iter().any(|&l| l > settings.episode_len) || *last > settings.episode_len {
            return Err("an episode ran past its length".into());
        }
        if short > crash_episodes {
            return Err(format!(
                "{short} episodes ended early with only {crash_episodes} crashes"
            ));
        }
        if crash_episodes == 0 && self.episodes() != settings.steps.div_ceil(settings.episode_len) {
            return Err(format!(
                "{} episodes in a crash-free run of {} steps",
                self.episodes(),
                settings.steps
            ));
        }
        Ok(())
    }

    /// Per-step trace as CSV with a header row.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(out);
        let id = self.run_id();
        for s in &self.steps {
            w.serialize(TraceRow {
                run_id: &id,
                step: s.step,
                episode: s.episode,
                node: &s.node,
                action_slot: s.action.slot,
                string_index: s.action.string,
                mode: s.action.mode,
                reward: s.reward,
                coverage: s.coverage,
                crash_flag: u8::from(s.crash),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Explores `model` with a fresh agent for `settings.steps` steps, resetting
/// the app whenever an episode ends. Continuous actions are decoded against
/// the observation they were chosen for.
pub fn run_experiment(
    model: Arc<AppModel>,
    preset: &str,
    config: &AgentConfig,
    label: &str,
    seed: u64,
    settings: &RunSettings,
) -> Result<RunRecord, RunError> {
    if settings.steps == 0 {
        return Err(RunError::NoSteps);
    }
    let started = Instant::now();
    let mut env = Env::new(model, settings.rewards, settings.episode_len)?;
    let shape = EnvShape {
        obs_len: env.observation_len(),
        pool_size: env.pool_size(),
    };
    let mut agent = config.build(shape, seed)?;
    let mut obs = env.restart_run(seed);
    let mut steps = Vec::with_capacity(settings.steps);
    let mut crashes = BTreeSet::new();
    let mut episode_lengths = vec![0];

    for step in 1..=settings.steps {
        let chosen = agent.act(&obs, true);
        let executed = match chosen {
            AgentAction::Discrete(a) => a,
            AgentAction::Continuous(raw) => decode_action(raw, &obs, shape.pool_size),
        };
        let result = env.step(executed)?;
        let crash = result.crash.is_some();
        agent.learn(&Experience {
            obs: &obs,
            action: &chosen,
            executed,
            reward: result.reward,
            next_obs: &result.observation,
            terminal: crash,
            episode_end: result.episode_done,
        })?;
        *episode_lengths.last_mut().expect("started") += 1;
        steps.push(StepRecord {
            step,
            episode: env.episode(),
            node: env.current_node().to_string(),
            action: executed,
            reward: result.reward,
            coverage: env.coverage(),
            crash,
        });
        if let Some(id) = result.crash {
            crashes.insert(id);
        }
        obs = if result.episode_done && step < settings.steps {
            episode_lengths.push(0);
            env.reset(seed)
        } else {
            result.observation
        };
    }
    Ok(RunRecord {
        algorithm: config.algorithm(),
        label: label.to_string(),
        preset: preset.to_string(),
        seed,
        steps,
        crashes,
        episode_lengths,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}

/// One cell of an experiment matrix.
#[derive(Debug, Clone)]
pub struct Job {
    pub model: Arc<AppModel>,
    pub preset: String,
    pub config: AgentConfig,
    pub label: String,
    pub seed: u64,
}

/// Runs `jobs` on a pool of `threads` workers; results keep job order.
pub fn run_jobs(
    jobs: &[Job],
    settings: &RunSettings,
    threads: usize,
) -> Result<Vec<Result<RunRecord, RunError>>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|j| {
                run_experiment(
                    Arc::clone(&j.model),
                    &j.preset,
                    &j.config,
                    &j.label,
                    j.seed,
                    settings,
                )
            })
            .collect()
    }))
}
