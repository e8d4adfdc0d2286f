//! Exploration strategies behind one observe/act/learn interface.

pub mod actor_critic;
pub mod ddpg;
pub mod qlearn;
pub mod random;
pub mod replay;
pub mod sac;
pub mod td3;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Observation};
use crate::neural::NeuralError;

pub use ddpg::{Ddpg, DdpgConfig};
pub use qlearn::{QLearning, QLearningConfig, QTable};
pub use random::RandomAgent;
pub use replay::ReplayBuffer;
pub use sac::{Sac, SacConfig};
pub use td3::{Td3, Td3Config};

pub const ACTION_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("unknown parameter `{key}` for {algorithm}")]
    UnknownParameter {
        algorithm: &'static str,
        key: String,
    },
    #[error("invalid value for `{key}`: {msg}")]
    InvalidParameter { key: String, msg: String },
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
}

/// What an agent hands to the environment driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentAction {
    Discrete(Action),
    /// Raw triple in `[-1, 1]^3`, decoded by the driver.
    Continuous([f64; ACTION_DIM]),
}

/// One environment step as seen by a learner.
#[derive(Debug, Clone, Copy)]
pub struct Experience<'a> {
    pub obs: &'a Observation,
    pub action: &'a AgentAction,
    pub executed: Action,
    pub reward: f64,
    pub next_obs: &'a Observation,
    /// True only for real terminal states (a crash); hitting the step limit
    /// is a truncation and still bootstraps.
    pub terminal: bool,
    pub episode_end: bool,
}

/// Sizes an agent needs to know about the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvShape {
    pub obs_len: usize,
    pub pool_size: usize,
}

pub trait Agent: Send {
    fn algorithm(&self) -> Algorithm;
    fn act(&mut self, obs: &Observation, explore: bool) -> AgentAction;
    fn learn(&mut self, exp: &Experience<'_>) -> Result<(), AgentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Random,
    QLearning,
    Ddpg,
    Td3,
    Sac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Random,
        Algorithm::QLearning,
        Algorithm::Ddpg,
        Algorithm::Td3,
        Algorithm::Sac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::QLearning => "q_learning",
            Algorithm::Ddpg => "ddpg",
            Algorithm::Td3 => "td3",
            Algorithm::Sac => "sac",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, Algorithm::Ddpg | Algorithm::Td3 | Algorithm::Sac)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(Algorithm::Random),
            "q" | "qlearn" | "qlearning" | "q_learning" => Ok(Algorithm::QLearning),
            "ddpg" => Ok(Algorithm::Ddpg),
            "td3" => Ok(Algorithm::Td3),
            "sac" => Ok(Algorithm::Sac),
            _ => Err(AgentError::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Hyperparameters for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentConfig {
    Random,
    QLearning(QLearningConfig),
    Ddpg(DdpgConfig),
    Td3(Td3Config),
    Sac(SacConfig),
}

impl AgentConfig {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Random => AgentConfig::Random,
            Algorithm::QLearning => AgentConfig::QLearning(QLearningConfig::default()),
            Algorithm::Ddpg => AgentConfig::Ddpg(DdpgConfig::default()),
            Algorithm::Td3 => AgentConfig::Td3(Td3Config::default()),
            Algorithm::Sac => AgentConfig::Sac(SacConfig::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            AgentConfig::Random => Algorithm::Random,
            AgentConfig::QLearning(_) => Algorithm::QLearning,
            AgentConfig::Ddpg(_) => Algorithm::Ddpg,
            AgentConfig::Td3(_) => Algorithm::Td3,
            AgentConfig::Sac(_) => Algorithm::Sac,
        }
    }

    /// Parameter values as a flat JSON object.
    pub fn parameters(&self) -> serde_json::Map<String, serde_json::Value> {
        let value = match self {
            AgentConfig::Random => serde_json::json!({}),
            AgentConfig::QLearning(c) => serde_json::to_value(c).expect("serializable"),
            AgentConfig::Ddpg(c) => serde_json::to_value(c).expect("serializable"),
            AgentConfig::Td3(c) => serde_json::to_value(c).expect("serializable"),
            AgentConfig::Sac(c) => serde_json::to_value(c).expect("serializable"),
        };
        match value {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("configs serialize to objects"),
        }
    }

    /// Overrides one parameter by name. `value` is parsed as JSON, so
    /// `0.5`, `10` and `[32, 32]` all work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), AgentError> {
        let algorithm = self.algorithm();
        let mut params = self.parameters();
        if !params.contains_key(key) {
            return Err(AgentError::UnknownParameter {
                algorithm: algorithm.name(),
                key: key.to_string(),
            });
        }
        let parsed: serde_json::Value =
            serde_json::from_str(value).map_err(|e| AgentError::InvalidParameter {
                key: key.to_string(),
                msg: e.to_string(),
            })?;
        params.insert(key.to_string(), parsed);
        let obj = serde_json::Value::Object(params);
        let invalid = |e: serde_json::Error| AgentError::InvalidParameter {
            key: key.to_string(),
            msg: e.to_string(),
        };
        let candidate = match algorithm {
            Algorithm::Random => AgentConfig::Random,
            Algorithm::QLearning => {
                AgentConfig::QLearning(serde_json::from_value(obj).map_err(invalid)?)
            }
            Algorithm::Ddpg => AgentConfig::Ddpg(serde_json::from_value(obj).map_err(invalid)?),
            Algorithm::Td3 => AgentConfig::Td3(serde_json::from_value(obj).map_err(invalid)?),
            Algorithm::Sac => AgentConfig::Sac(serde_json::from_value(obj).map_err(invalid)?),
        };
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |key: &str, msg: &str| {
            Err(AgentError::InvalidParameter {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            AgentConfig::Random => Ok(()),
            AgentConfig::QLearning(c) => {
                if !unit(c.alpha) {
                    return bad("alpha", "must lie in [0, 1]");
                }
                if !unit(c.gamma) {
                    return bad("gamma", "must lie in [0, 1]");
                }
                if !unit(c.epsilon) {
                    return bad("epsilon", "must lie in [0, 1]");
                }
                Ok(())
            }
            AgentConfig::Ddpg(c) => {
                if !unit(c.random_exploration) {
                    return bad("random_exploration", "must lie in [0, 1]");
                }
                if c.nb_rollout_steps == 0 {
                    return bad("nb_rollout_steps", "must be positive");
                }
                c.common().validate()
            }
            AgentConfig::Td3(c) => {
                if !unit(c.random_exploration) {
                    return bad("random_exploration", "must lie in [0, 1]");
                }
                if c.train_freq == 0 || c.policy_delay == 0 {
                    return bad("train_freq", "train_freq and policy_delay must be positive");
                }
                c.common().validate()
            }
            AgentConfig::Sac(c) => {
                if c.train_freq == 0 || c.target_update_interval == 0 {
                    return bad(
                        "train_freq",
                        "train_freq and target_update_interval must be positive",
                    );
                }
                if c.ent_coef < 0.0 {
                    return bad("ent_coef", "must be non-negative");
                }
                c.common().validate()
            }
        }
    }

    pub fn build(&self, shape: EnvShape, seed: u64) -> Result<Box<dyn Agent>, AgentError> {
        self.validate()?;
        Ok(match self {
            AgentConfig::Random => Box::new(RandomAgent::new(shape, seed)),
            AgentConfig::QLearning(c) => Box::new(QLearning::new(c.clone(), shape, seed)),
            AgentConfig::Ddpg(c) => Box::new(Ddpg::new(c.clone(), shape, seed)?),
            AgentConfig::Td3(c) => Box::new(Td3::new(c.clone(), shape, seed)?),
            AgentConfig::Sac(c) => Box::new(Sac::new(c.clone(), shape, seed)?),
        })
    }
}

/// The hyperparameter grids of the tuning study, one named configuration per
/// cell.
pub fn tuning_grid(algorithm: Algorithm) -> Vec<(String, AgentConfig)> {
    let explore = [0.5, 0.6, 0.7, 0.8];
    let mut grid = Vec::new();
    match algorithm {
        Algorithm::Random => grid.push(("random".to_string(), AgentConfig::Random)),
        Algorithm::QLearning => {
            for gamma in [0.99, 0.9] {
                for epsilon in explore {
                    let c = QLearningConfig {
                        epsilon,
                        gamma,
                        ..QLearningConfig::default()
                    };
                    grid.push((
                        format!("q_learning-eps{epsilon}-g{gamma}"),
                        AgentConfig::QLearning(c),
                    ));
                }
            }
        }
        Algorithm::Ddpg => {
            for random_exploration in explore {
                for nb_train_steps in [5, 25] {
                    let c = DdpgConfig {
                        random_exploration,
                        nb_train_steps,
                        ..DdpgConfig::default()
                    };
                    grid.push((
                        format!("ddpg-re{random_exploration}-nts{nb_train_steps}"),
                        AgentConfig::Ddpg(c),
                    ));
                }
            }
        }
        Algorithm::Td3 => {
            for random_exploration in explore {
                for train_freq in [25, 100] {
                    let c = Td3Config {
                        random_exploration,
                        train_freq,
                        ..Td3Config::default()
                    };
                    grid.push((
                        format!("td3-re{random_exploration}-tf{train_freq}"),
                        AgentConfig::Td3(c),
                    ));
                }
            }
        }
        Algorithm::Sac => {
            for target_update_interval in [1, 2, 5, 10] {
                for train_freq in [1, 5] {
                    let c = SacConfig {
                        target_update_interval,
                        train_freq,
                        ..SacConfig::default()
                    };
                    grid.push((
                        format!("sac-tui{target_update_interval}-tf{train_freq}"),
                        AgentConfig::Sac(c),
                    ));
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dqn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn override_by_name() {
        let mut c = AgentConfig::default_for(Algorithm::Sac);
        c.set("train_freq", "1").unwrap();
        c.set("hidden", "[32, 16]").unwrap();
        let AgentConfig::Sac(s) = &c else {
            unreachable!()
        };
        assert_eq!(s.train_freq, 1);
        assert_eq!(s.hidden, vec![32, 16]);
        assert!(matches!(
            c.set("nb_train_steps", "3"),
            Err(AgentError::UnknownParameter { .. })
        ));
        let mut q = AgentConfig::default_for(Algorithm::QLearning);
        assert!(q.set("epsilon", "1.5").is_err());
    }

    #[test]
    fn study_defaults() {
        let AgentConfig::Ddpg(d) = AgentConfig::default_for(Algorithm::Ddpg) else {
            unreachable!()
        };
        assert_eq!(
            (d.learning_rate, d.random_exploration, d.nb_train_steps),
            (1e-4, 0.7, 10)
        );
        let AgentConfig::Td3(t) = AgentConfig::default_for(Algorithm::Td3) else {
            unreachable!()
        };
        assert_eq!(
            (t.learning_rate, t.random_exploration, t.train_freq),
            (3e-4, 0.8, 10)
        );
        let AgentConfig::Sac(s) = AgentConfig::default_for(Algorithm::Sac) else {
            unreachable!()
        };
        assert_eq!(
            (s.learning_rate, s.train_freq, s.target_update_interval),
            (3e-4, 5, 10)
        );
        let AgentConfig::QLearning(q) = AgentConfig::default_for(Algorithm::QLearning) else {
            unreachable!()
        };
        assert_eq!((q.alpha, q.gamma, q.epsilon), (0.628, 0.9, 0.8));
    }

    #[test]
    fn grids_have_eight_cells() {
        for a in [
            Algorithm::QLearning,
            Algorithm::Ddpg,
            Algorithm::Td3,
            Algorithm::Sac,
        ] {
            let g = tuning_grid(a);
            assert_eq!(g.len(), 8);
            let mut names: Vec<_> = g.iter().map(|(n, _)| n.clone()).collect();
            names.dedup();
            assert_eq!(names.len(), 8);
        }
    }
}
