//! Reinforcement-learning schedulers that decide which task a multi-task student trains on
//! next: a bandit (TSCL) and a deep Q network, plus surrogate students, baselines and
//! analysis tools.

pub mod analysis;
pub mod baselines;
pub mod dqn;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod log;
pub mod neural;
pub mod runner;
pub mod tscl;
pub mod types;

/// Generator that drives every random draw of one experiment.
pub type ExperimentRng = rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};
pub use log::ExperimentLog;
pub use runner::{run_experiment, RunConfig, Scheduler};
pub use types::{DecisionSource, Score, StepRecord, TaskId, TaskProfile, TaskSet};
