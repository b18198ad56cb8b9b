//! Declarative experiment specifications: one TOML file names the scheduler, the student
//! environment, the run cadences and the seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselineScheduler};
use crate::dqn::{DqnCheckpoint, DqnConfig, DqnScheduler};
use crate::envs::{
    LearnedConfig, StudentEnvironment, SyntheticConfig, SyntheticTransferStudent,
    TinyLearnedStudent,
};
use crate::error::{Error, Result};
use crate::log::ExperimentLog;
use crate::runner::{run_experiment, EvalMode, RunConfig, Scheduler, WarmupPool};
use crate::tscl::{TsclConfig, TsclScheduler};

pub const SPEC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSpec {
    Tscl(TsclConfig),
    Dqn(DqnConfig),
    Uniform(BaselineOptions),
    Proportional(BaselineOptions),
}

/// The baselines take no options; the empty table only rejects stray keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineOptions {}

impl SchedulerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerSpec::Tscl(_) => "tscl",
            SchedulerSpec::Dqn(_) => "dqn",
            SchedulerSpec::Uniform(_) => "uniform",
            SchedulerSpec::Proportional(_) => "proportional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Synthetic transfer student; `calibration` is a TOML file relative to the spec, or the
    /// built-in eight-task calibration when absent.
    Synthetic(SyntheticSource),
    Learned(LearnedConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub calibration: Option<PathBuf>,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec::Synthetic(SyntheticSource::default())
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub total_steps: u64,
    pub action_interval: u64,
    pub warmup_steps: u64,
    #[serde(default)]
    pub warmup_pool: WarmupPool,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub evaluation: EvalMode,
    #[serde(default)]
    pub eval_interval: u64,
    #[serde(default)]
    pub state_snapshot_interval: u64,
    #[serde(default)]
    pub scheduler_snapshot_interval: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub environment: EnvironmentSpec,
}

/// A parsed spec whose environment is fully materialized, ready to run any seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedExperiment {
    pub spec: ExperimentSpec,
    pub environment: ResolvedEnvironment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedEnvironment {
    Synthetic(SyntheticConfig),
    Learned(LearnedConfig),
}

pub struct SeedOutcome {
    pub log: ExperimentLog,
    pub checkpoint: Option<DqnCheckpoint>,
}

enum BuiltScheduler {
    Tscl(TsclScheduler),
    Dqn(DqnScheduler),
    Baseline(BaselineScheduler),
}

impl BuiltScheduler {
    fn as_dyn(&mut self) -> &mut dyn Scheduler {
        match self {
            BuiltScheduler::Tscl(s) => s,
            BuiltScheduler::Dqn(s) => s,
            BuiltScheduler::Baseline(s) => s,
        }
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

fn plain(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn anchored(text: &str, key: &str, message: String) -> Error {
    match line_of(text, key) {
        Some(line) => Error::Config(format!("line {line}: {message}")),
        None => Error::Config(message),
    }
}

impl ExperimentSpec {
    /// Parses without touching the file system. Syntax and schema errors carry the line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate_with(text)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(anchored(
                text,
                "schema_version",
                format!(
                    "unsupported schema_version {}, expected {SPEC_SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.seeds.is_empty() {
            return Err(anchored(
                text,
                "seeds",
                "at least one seed is required".into(),
            ));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(anchored(text, "seeds", "seeds must be distinct".into()));
        }
        self.run_config(0).validate().map_err(|e| {
            let msg = plain(e);
            // the offending key is the first one the message mentions
            let key = [
                "total_steps",
                "action_interval",
                "warmup_steps",
                "eval_interval",
                "state_snapshot_interval",
                "scheduler_snapshot_interval",
            ]
            .into_iter()
            .filter_map(|k| msg.find(k).map(|at| (at, k)))
            .min()
            .map_or("total_steps", |(_, k)| k);
            anchored(text, key, msg)
        })?;
        let checked = match &self.scheduler {
            SchedulerSpec::Tscl(c) => c.validate(),
            SchedulerSpec::Dqn(c) => c.validate(),
            _ => Ok(()),
        };
        checked.map_err(|e| {
            let msg = plain(e);
            let first = msg.split_whitespace().next().unwrap_or("kind");
            let key = if line_of(text, first).is_some() {
                first
            } else {
                "kind"
            };
            anchored(text, key, format!("[scheduler] {msg}"))
        })
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            total_steps: self.total_steps,
            action_interval: self.action_interval,
            warmup_steps: self.warmup_steps,
            warmup_pool: self.warmup_pool,
            seed,
            evaluation: self.evaluation,
            eval_interval: self.eval_interval,
            state_snapshot_interval: self.state_snapshot_interval,
            scheduler_snapshot_interval: self.scheduler_snapshot_interval,
        }
    }

    /// Loads any calibration file the environment refers to, relative to `base_dir`.
    pub fn resolve(self, base_dir: &Path) -> Result<ResolvedExperiment> {
        let environment = match &self.environment {
            EnvironmentSpec::Synthetic(SyntheticSource { calibration: None }) => {
                ResolvedEnvironment::Synthetic(SyntheticConfig::eight_task_default())
            }
            EnvironmentSpec::Synthetic(SyntheticSource {
                calibration: Some(path),
            }) => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                let cfg = SyntheticConfig::from_toml(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                ResolvedEnvironment::Synthetic(cfg)
            }
            EnvironmentSpec::Learned(cfg) => {
                cfg.validate()?;
                ResolvedEnvironment::Learned(cfg.clone())
            }
        };
        Ok(ResolvedExperiment {
            spec: self,
            environment,
        })
    }

    pub fn load(path: &Path) -> Result<ResolvedExperiment> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let spec = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.resolve(path.parent().unwrap_or(Path::new(".")))
    }
}

impl ResolvedExperiment {
    fn environment(&self, seed: u64) -> Result<Box<dyn StudentEnvironment>> {
        Ok(match &self.environment {
            ResolvedEnvironment::Synthetic(cfg) => {
                Box::new(SyntheticTransferStudent::new(cfg.clone())?)
            }
            ResolvedEnvironment::Learned(cfg) => {
                Box::new(TinyLearnedStudent::new(cfg.clone(), seed)?)
            }
        })
    }

    /// Runs one seed from scratch. Identical inputs give bit-identical outcomes.
    pub fn run_seed(&self, seed: u64) -> Result<SeedOutcome> {
        let run = self.spec.run_config(seed);
        let mut env = self.environment(seed)?;
        let tasks = env.tasks().clone();
        let mut scheduler = match &self.spec.scheduler {
            SchedulerSpec::Tscl(c) => {
                BuiltScheduler::Tscl(TsclScheduler::new(c.clone(), &run, &tasks)?)
            }
            SchedulerSpec::Dqn(c) => {
                BuiltScheduler::Dqn(DqnScheduler::new(c.clone(), &run, &tasks, env.state_dim())?)
            }
            SchedulerSpec::Uniform(_) => BuiltScheduler::Baseline(BaselineScheduler::new(
                BaselineKind::Uniform,
                &run,
                &tasks,
            )?),
            SchedulerSpec::Proportional(_) => BuiltScheduler::Baseline(BaselineScheduler::new(
                BaselineKind::Proportional,
                &run,
                &tasks,
            )?),
        };
        let log = run_experiment(&run, env.as_mut(), scheduler.as_dyn())?;
        let checkpoint = match &scheduler {
            BuiltScheduler::Dqn(d) if run.total_steps > 0 => Some(d.checkpoint()),
            _ => None,
        };
        Ok(SeedOutcome { log, checkpoint })
    }
}
