//! Teacher-Student Curriculum Learning: a bandit over tasks whose value for each task is an
//! exponentially smoothed estimate of the score change seen when training on it.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::runner::{Decision, Observation, Outcome, RunConfig, Scheduler, WarmupPool};
use crate::types::{DecisionSource, Score, TaskId, TaskSet};
use crate::ExperimentRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsclConfig {
    /// Smoothing coefficient of the expected-return average, in (0, 1].
    pub alpha: f64,
    /// Fixed exploration rate of the ε-greedy policy.
    pub epsilon: f64,
    /// Keep expected returns at their initial values until warm-up ends.
    #[serde(default)]
    pub freeze_q_during_warmup: bool,
    /// Do not update an action's expected return on its first observation.
    #[serde(default)]
    pub skip_first_reward: bool,
}

impl Default for TsclConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            freeze_q_during_warmup: false,
            skip_first_reward: false,
        }
    }
}

impl TsclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Expected return `q`, last observed score `h` and the queue of not-yet-tried actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTable {
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    pub unvisited: VecDeque<TaskId>,
}

impl ReturnTable {
    /// All-zero table whose unvisited queue holds `unvisited` in order.
    pub fn new(k: usize, unvisited: impl IntoIterator<Item = TaskId>) -> Self {
        let mut queue = VecDeque::new();
        for t in unvisited {
            if !queue.contains(&t) {
                queue.push_back(t);
            }
        }
        Self {
            q: vec![0.0; k],
            h: vec![0.0; k],
            unvisited: queue,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Records score `x` for `action` and returns the reward `x - h[action]`.
    /// The expected return is smoothed only when `update_q` is set.
    pub fn observe_with(&mut self, action: TaskId, x: Score, alpha: f64, update_q: bool) -> f64 {
        let a = action.0;
        let reward = x.value() - self.h[a];
        self.h[a] = x.value();
        if update_q {
            self.q[a] = alpha * reward + (1.0 - alpha) * self.q[a];
        }
        reward
    }

    pub fn observe(&mut self, action: TaskId, x: Score, alpha: f64) -> f64 {
        self.observe_with(action, x, alpha, true)
    }

    /// Index of the largest `|q|`; ties go to the lowest index.
    pub fn greedy(&self) -> TaskId {
        let mut best = 0;
        for (i, v) in self.q.iter().enumerate().skip(1) {
            if v.abs() > self.q[best].abs() {
                best = i;
            }
        }
        TaskId(best)
    }
}

/// Exploration settings consulted by [`tscl_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    pub epsilon: f64,
    pub warmup_steps: u64,
    /// Restricted warm-up pool. When `None`, warm-up samples every action and the unvisited
    /// queue takes precedence, as in the literal listing.
    pub warmup_pool: Option<Vec<TaskId>>,
}

fn pick<R: Rng + ?Sized>(pool: &[TaskId], rng: &mut R) -> TaskId {
    pool[rng.gen_range(0..pool.len())]
}

/// Chooses the next action at decision step `step`.
///
/// Draw order: one index draw in restricted warm-up; otherwise nothing while the unvisited
/// queue is non-empty, then one uniform `r`, plus one index draw on the random branch.
pub fn tscl_select<R: Rng + ?Sized>(
    table: &mut ReturnTable,
    step: u64,
    policy: &SelectionPolicy,
    rng: &mut R,
) -> Result<(TaskId, DecisionSource)> {
    if table.is_empty() {
        return Err(Error::Config("TSCL needs at least one action".into()));
    }
    let in_warmup = step < policy.warmup_steps;
    if let (true, Some(pool)) = (in_warmup, &policy.warmup_pool) {
        if pool.is_empty() {
            return Err(Error::Config("warm-up pool is empty".into()));
        }
        return Ok((pick(pool, rng), DecisionSource::Warmup));
    }
    if let Some(next) = table.unvisited.pop_front() {
        return Ok((next, DecisionSource::UnvisitedQueue));
    }
    let r: f64 = rng.gen();
    if in_warmup || r < policy.epsilon {
        let all: Vec<TaskId> = (0..table.len()).map(TaskId).collect();
        let source = if in_warmup {
            DecisionSource::Warmup
        } else {
            DecisionSource::Random
        };
        return Ok((pick(&all, rng), source));
    }
    Ok((table.greedy(), DecisionSource::Greedy))
}

#[derive(Debug, Clone)]
pub struct TsclScheduler {
    config: TsclConfig,
    policy: SelectionPolicy,
    k: usize,
    table: ReturnTable,
    seen: Vec<bool>,
}

impl TsclScheduler {
    pub fn new(config: TsclConfig, run: &RunConfig, tasks: &TaskSet) -> Result<Self> {
        config.validate()?;
        let warmup_pool = match run.warmup_pool {
            WarmupPool::Eligible => Some(tasks.warmup_pool()),
            WarmupPool::All => None,
        };
        let k = tasks.len();
        Ok(Self {
            policy: SelectionPolicy {
                epsilon: config.epsilon,
                warmup_steps: run.warmup_steps,
                warmup_pool,
            },
            config,
            k,
            table: ReturnTable::new(k, []),
            seen: vec![false; k],
        })
    }

    pub fn table(&self) -> &ReturnTable {
        &self.table
    }

    fn decision(&self, (action, source): (TaskId, DecisionSource)) -> Decision {
        Decision {
            action,
            source,
            epsilon: Some(self.config.epsilon),
        }
    }
}

impl Scheduler for TsclScheduler {
    fn name(&self) -> &'static str {
        "tscl"
    }

    fn num_tasks(&self) -> usize {
        self.k
    }

    fn start(&mut self, _state: Option<&StateVector>, rng: &mut ExperimentRng) -> Result<Decision> {
        self.seen = vec![false; self.k];
        let restricted_warmup = self.policy.warmup_pool.is_some() && self.policy.warmup_steps > 0;
        if restricted_warmup {
            self.table = ReturnTable::new(self.k, (0..self.k).map(TaskId));
            let d = tscl_select(&mut self.table, 0, &self.policy, rng)?;
            Ok(self.decision(d))
        } else {
            self.table = ReturnTable::new(self.k, (1..self.k).map(TaskId));
            Ok(self.decision((TaskId(0), DecisionSource::UnvisitedQueue)))
        }
    }

    fn observe(&mut self, obs: &Observation<'_>, rng: &mut ExperimentRng) -> Result<Outcome> {
        let a = obs.action.0;
        let frozen = self.config.freeze_q_during_warmup && obs.step < self.policy.warmup_steps;
        let first = !self.seen[a];
        self.seen[a] = true;
        let update_q = !frozen && !(first && self.config.skip_first_reward);
        let reward = self
            .table
            .observe_with(obs.action, obs.score, self.config.alpha, update_q);
        let d = tscl_select(&mut self.table, obs.step, &self.policy, rng)?;
        Ok(Outcome {
            reward: Some(reward),
            next: self.decision(d),
        })
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        serde_json::to_value(&self.table).ok()
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "tscl", "config": self.config })
    }
}
