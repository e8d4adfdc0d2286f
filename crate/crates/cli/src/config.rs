//! Experiment configuration: flags, config files and their resolution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fatesim_core::agents::{tuning_grid, AgentConfig, Algorithm};
use fatesim_core::runner::{RunSettings, DEFAULT_STEPS};
use fatesim_core::suite;
use fatesim_core::{parse_model, AppModel, RewardParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_OUT: &str = "fatesim-out";
pub const DEFAULT_REPS: usize = 10;
pub const OUT_ENV: &str = "FATESIM_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub model: Option<PathBuf>,
    pub algorithms: Vec<String>,
    /// `algorithm -> parameter -> value`.
    pub overrides: BTreeMap<String, BTreeMap<String, serde_json::Value>>,
    pub steps: usize,
    pub episode_len: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            model: None,
            algorithms: ["random", "q_learning", "ddpg", "td3", "sac"]
                .map(String::from)
                .to_vec(),
            overrides: BTreeMap::new(),
            steps: DEFAULT_STEPS,
            episode_len: fatesim_core::env::DEFAULT_EPISODE_LEN,
            reps: DEFAULT_REPS,
            seed: 0,
            out: PathBuf::from(DEFAULT_OUT),
            jobs: 1,
            alpha: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Parses `algo.key=value` and records it as an override.
    pub fn add_override(&mut self, spec: &str) -> Result<(), CliError> {
        let bad = || {
            CliError::Usage(format!(
                "override `{spec}` is not of the form algo.key=value"
            ))
        };
        let (lhs, value) = spec.split_once('=').ok_or_else(bad)?;
        let (algo, key) = lhs.split_once('.').ok_or_else(bad)?;
        let value: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let algo = parse_algorithm(algo)?.name().to_string();
        self.overrides
            .entry(algo)
            .or_default()
            .insert(key.to_string(), value);
        Ok(())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            steps: self.steps,
            episode_len: self.episode_len,
            rewards: RewardParams::default(),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        if self.reps == 0 {
            return Err(CliError::Usage("reps must be at least 1".into()));
        }
        if self.episode_len == 0 || self.steps < self.episode_len {
            return Err(CliError::Usage(format!(
                "steps ({}) must be at least the episode length ({})",
                self.steps, self.episode_len
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn load_model(&self) -> Result<(String, AppModel), CliError> {
        match (&self.preset, &self.model) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "give either a preset or a model file, not both".into(),
            )),
            (None, None) => Err(CliError::Usage("no model: pass --preset or --model".into())),
            (Some(name), None) => {
                let cfg = suite::preset(name).map_err(|e| CliError::Usage(e.to_string()))?;
                let model = suite::generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
                Ok((name.clone(), model))
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let model = parse_model(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let name = path
                    .file_stem()
                    .map_or("model".into(), |s| s.to_string_lossy().into_owned());
                Ok((name, model))
            }
        }
    }

    /// Validates the config, loads the model and builds one agent config per
    /// requested algorithm.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.check()?;
        if self.algorithms.is_empty() {
            return Err(CliError::Usage("no algorithms given".into()));
        }
        let mut agents = Vec::new();
        for name in &self.algorithms {
            let algorithm = parse_algorithm(name)?;
            if agents
                .iter()
                .any(|(l, _): &(String, AgentConfig)| l == algorithm.name())
            {
                return Err(CliError::Usage(format!("algorithm `{name}` listed twice")));
            }
            agents.push((
                algorithm.name().to_string(),
                AgentConfig::default_for(algorithm),
            ));
        }
        for (algo, params) in &self.overrides {
            let algorithm = parse_algorithm(algo)?;
            let Some((_, cfg)) = agents.iter_mut().find(|(_, c)| c.algorithm() == algorithm) else {
                return Err(CliError::Usage(format!(
                    "override for `{algo}`, which is not being run"
                )));
            };
            for (key, value) in params {
                cfg.set(key, &value.to_string())
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        self.with_agents(agents)
    }

    /// Like `resolve` but runs every cell of one algorithm's tuning grid.
    pub fn resolve_grid(&self, grid: &str) -> Result<Resolved, CliError> {
        self.check()?;
        let algorithm = parse_algorithm(grid)?;
        self.with_agents(tuning_grid(algorithm))
    }

    fn with_agents(&self, agents: Vec<(String, AgentConfig)>) -> Result<Resolved, CliError> {
        let (source, model) = self.load_model()?;
        Ok(Resolved {
            config: self.clone(),
            source,
            model: Arc::new(model),
            agents,
        })
    }
}

pub fn parse_algorithm(name: &str) -> Result<Algorithm, CliError> {
    name.parse::<Algorithm>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// A config with its model loaded and agent parameters filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    /// Preset name or model file stem.
    pub source: String,
    pub model: Arc<AppModel>,
    /// `(label, config)` pairs in run order.
    pub agents: Vec<(String, AgentConfig)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn social() -> ExperimentConfig {
        ExperimentConfig {
            preset: Some("social/20_str".into()),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_resolve() {
        let r = social().resolve().unwrap();
        let labels: Vec<&str> = r.agents.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["random", "q_learning", "ddpg", "td3", "sac"]);
        assert_eq!(r.source, "social/20_str");
    }

    #[test]
    fn overrides_apply() {
        let mut c = social();
        c.add_override("sac.ent_coef=0.1").unwrap();
        c.add_override("qlearn.epsilon=0.5").unwrap();
        let r = c.resolve().unwrap();
        let sac = &r.agents.iter().find(|(l, _)| l == "sac").unwrap().1;
        assert_eq!(sac.parameters()["ent_coef"], serde_json::json!(0.1));
        let q = &r.agents.iter().find(|(l, _)| l == "q_learning").unwrap().1;
        assert_eq!(q.parameters()["epsilon"], serde_json::json!(0.5));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = social();
        c.add_override("sac.no_such_knob=1").unwrap();
        assert!(c.resolve().is_err());
        assert!(social().add_override("sac").is_err());
        let mut c = social();
        c.algorithms = vec!["dqn".into()];
        assert!(c.resolve().is_err());
        let mut c = social();
        c.reps = 0;
        assert!(c.resolve().is_err());
        let mut c = social();
        c.steps = 100;
        assert!(c.resolve().is_err());
        let mut c = social();
        c.model = Some("x.json".into());
        assert!(c.resolve().is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let c = social();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"preset": "player/20_str", "reps": 3}"#).unwrap();
        assert_eq!((partial.reps, partial.steps), (3, 4000));
    }

    #[test]
    fn grid_resolves_eight_cells() {
        let r = social().resolve_grid("td3").unwrap();
        assert_eq!(r.agents.len(), 8);
    }
}
