//! App exploration as reinforcement learning over guarded finite-state
//! app models: model format, simulator, neural agents, synthetic benchmark
//! apps and the statistics used to compare exploration runs.

pub mod agents;
pub mod env;
pub mod guard;
pub mod model;
pub mod neural;
pub mod oracle;
pub mod runner;
pub mod stats;
pub mod suite;

pub use env::{
    decode_action, encode_observation, Action, Env, EnvError, Observation, RewardParams, StepResult,
};
pub use guard::{GuardError, GuardExpr, Value, VarStore};
pub use model::{
    parse_model, validate_model, AppModel, ModelError, Node, Transition, TransitionKind,
};
