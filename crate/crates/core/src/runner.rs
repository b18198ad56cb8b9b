//! Scheduler contract and the outer training loop shared by every scheduler.
//!
//! Draw order within one experiment generator: `env.reset` consumes one `u64`, then
//! `Scheduler::start`, then for every step `t` the environment's training draw for step `t`
//! followed (on decision steps) by the scheduler's draws for the decision covering `t + 1`.

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::envs::{EvalTarget, StateVector, StudentEnvironment};
use crate::error::{Error, Result};
use crate::log::{EvalPoint, ExperimentLog, SchedulerSnapshot, StateSnapshot};
use crate::types::{DecisionSource, Score, StepRecord, TaskId, TaskSet};
use crate::ExperimentRng;

/// Which data the score `X_t` is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Development data of the task that was just trained.
    #[default]
    CurrentTask,
    /// Equal-weight mix over all tasks.
    Mixed,
}

/// Tasks a scheduler may pick from during warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupPool {
    /// Only warm-up eligible (high-resource) tasks.
    #[default]
    Eligible,
    /// Every task, as in the literal algorithm listing.
    All,
}

impl WarmupPool {
    pub fn tasks(self, set: &TaskSet) -> Vec<TaskId> {
        match self {
            WarmupPool::Eligible => set.warmup_pool(),
            WarmupPool::All => set.ids().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub total_steps: u64,
    /// A scheduling decision is made every `action_interval` steps.
    pub action_interval: u64,
    pub warmup_steps: u64,
    #[serde(default)]
    pub warmup_pool: WarmupPool,
    pub seed: u64,
    #[serde(default)]
    pub evaluation: EvalMode,
    /// Per-task evaluation trace cadence in steps; 0 disables the trace.
    #[serde(default)]
    pub eval_interval: u64,
    /// Cadence of recorded state vectors (schedulers that observe state only); 0 disables.
    #[serde(default)]
    pub state_snapshot_interval: u64,
    /// Cadence of scheduler-internal snapshots; 0 disables.
    #[serde(default)]
    pub scheduler_snapshot_interval: u64,
}

impl RunConfig {
    pub fn new(total_steps: u64, action_interval: u64, warmup_steps: u64, seed: u64) -> Self {
        Self {
            total_steps,
            action_interval,
            warmup_steps,
            warmup_pool: WarmupPool::Eligible,
            seed,
            evaluation: EvalMode::CurrentTask,
            eval_interval: 0,
            state_snapshot_interval: 0,
            scheduler_snapshot_interval: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_interval == 0 {
            return Err(Error::Config("action_interval must be at least 1".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        for (name, cadence) in [
            ("eval_interval", self.eval_interval),
            ("state_snapshot_interval", self.state_snapshot_interval),
            (
                "scheduler_snapshot_interval",
                self.scheduler_snapshot_interval,
            ),
        ] {
            if cadence % self.action_interval != 0 {
                return Err(Error::Config(format!(
                    "{name} {cadence} is not a multiple of action_interval {}",
                    self.action_interval
                )));
            }
        }
        Ok(())
    }

    pub fn target_for(&self, action: TaskId) -> EvalTarget {
        match self.evaluation {
            EvalMode::CurrentTask => EvalTarget::Task(action),
            EvalMode::Mixed => EvalTarget::Mixed,
        }
    }
}

/// A scheduling decision: the task to train on until the next decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: TaskId,
    pub source: DecisionSource,
    pub epsilon: Option<f64>,
}

/// What the loop reports to the scheduler at a decision step.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub step: u64,
    /// Task trained during the interval that just ended.
    pub action: TaskId,
    /// `X_t`: score after the interval.
    pub score: Score,
    /// `X_t` minus the score of the same evaluation target at the start of the interval.
    pub interval_reward: f64,
    pub state: Option<&'a StateVector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Reward the scheduler observed, if any; logged with the score.
    pub reward: Option<f64>,
    pub next: Decision,
}

pub trait Scheduler {
    fn name(&self) -> &'static str;

    fn num_tasks(&self) -> usize;

    /// Whether observations must carry the student's state vector.
    fn needs_state(&self) -> bool {
        false
    }

    /// Resets internal state and makes the decision for step 1.
    fn start(&mut self, state: Option<&StateVector>, rng: &mut ExperimentRng) -> Result<Decision>;

    fn observe(&mut self, obs: &Observation<'_>, rng: &mut ExperimentRng) -> Result<Outcome>;

    fn snapshot(&self) -> Option<serde_json::Value> {
        None
    }

    fn describe(&self) -> serde_json::Value;
}

/// `R_t = X_t - X_{t-1}`: positive when the loss went down.
pub fn compute_reward(current: Score, previous: Score) -> f64 {
    current.value() - previous.value()
}

fn score_at(
    env: &dyn StudentEnvironment,
    target: EvalTarget,
    step: u64,
    action: TaskId,
) -> Result<Score> {
    env.eval_score(target).map_err(|e| match e {
        Error::NonFinite { .. } => Error::NonFiniteScore { step, task: action },
        other => other,
    })
}

fn trace_point(env: &dyn StudentEnvironment, step: u64) -> Result<EvalPoint> {
    let scores = env
        .tasks()
        .ids()
        .map(|t| score_at(env, EvalTarget::Task(t), step, t).map(Score::value))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalPoint { step, scores })
}

/// Runs one experiment: trains the student for `config.total_steps` steps on the tasks the
/// scheduler picks, with a scheduler observe/select cycle every `action_interval` steps.
pub fn run_experiment(
    config: &RunConfig,
    env: &mut dyn StudentEnvironment,
    scheduler: &mut dyn Scheduler,
) -> Result<ExperimentLog> {
    config.validate()?;
    let k = env.tasks().len();
    if scheduler.num_tasks() != k {
        return Err(Error::TaskCountMismatch {
            env: k,
            scheduler: scheduler.num_tasks(),
        });
    }
    let mut log = ExperimentLog::new(
        config.seed,
        scheduler.name(),
        env.tasks().clone(),
        serde_json::json!({
            "run": config,
            "scheduler": scheduler.describe(),
            "environment": env.describe(),
        }),
    );
    if config.total_steps == 0 {
        return Ok(log);
    }

    let mut rng = ExperimentRng::seed_from_u64(config.seed);
    env.reset(rng.next_u64());
    let wants_state = scheduler.needs_state();
    let state0 = wants_state.then(|| env.observe_state());
    let mut decision = scheduler.start(state0.as_ref(), &mut rng)?;
    env.tasks().check(decision.action)?;
    if let Some(s) = state0 {
        if config.state_snapshot_interval > 0 {
            log.states.push(StateSnapshot { step: 0, state: s });
        }
    }
    if config.eval_interval > 0 {
        log.eval_trace.push(trace_point(env, 0)?);
    }
    let mut interval_start = score_at(env, config.target_for(decision.action), 0, decision.action)?;

    log.records.reserve(config.total_steps as usize);
    for t in 1..=config.total_steps {
        let action = decision.action;
        env.train_on(action, &mut rng)?;
        let mut record = StepRecord {
            step: t,
            action,
            reward: None,
            score: None,
            epsilon: decision.epsilon,
            decision_source: decision.source,
        };
        if t % config.action_interval == 0 {
            let target = config.target_for(action);
            let score = score_at(env, target, t, action)?;
            let state = wants_state.then(|| env.observe_state());
            let obs = Observation {
                step: t,
                action,
                score,
                interval_reward: compute_reward(score, interval_start),
                state: state.as_ref(),
            };
            let outcome = scheduler.observe(&obs, &mut rng)?;
            env.tasks().check(outcome.next.action)?;
            if let Some(r) = outcome.reward {
                if !r.is_finite() {
                    return Err(Error::NonFiniteScore {
                        step: t,
                        task: action,
                    });
                }
                record.reward = Some(r);
                record.score = Some(score.value());
            }
            decision = outcome.next;
            interval_start = score_at(env, config.target_for(decision.action), t, decision.action)?;
            if let Some(s) = state {
                if config.state_snapshot_interval > 0 && t % config.state_snapshot_interval == 0 {
                    log.states.push(StateSnapshot { step: t, state: s });
                }
            }
            if config.scheduler_snapshot_interval > 0 && t % config.scheduler_snapshot_interval == 0
            {
                if let Some(data) = scheduler.snapshot() {
                    log.scheduler_snapshots
                        .push(SchedulerSnapshot { step: t, data });
                }
            }
        }
        if config.eval_interval > 0 && t % config.eval_interval == 0 {
            log.eval_trace.push(trace_point(env, t)?);
        }
        log.records.push(record);
    }
    Ok(log)
}
