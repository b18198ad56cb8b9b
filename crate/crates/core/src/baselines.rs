//! Non-adaptive comparison schedules: tasks drawn uniformly or in proportion to their data.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::runner::{Decision, Observation, Outcome, RunConfig, Scheduler};
use crate::types::{DecisionSource, TaskId, TaskSet};
use crate::ExperimentRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Uniform,
    Proportional,
}

/// Draws tasks independently at every decision point. During warm-up only the warm-up
/// pool is sampled, uniformly.
#[derive(Debug, Clone)]
pub struct BaselineScheduler {
    kind: BaselineKind,
    warmup_steps: u64,
    warmup_pool: Vec<TaskId>,
    k: usize,
    weighted: WeightedIndex<f64>,
}

impl BaselineScheduler {
    pub fn new(kind: BaselineKind, run: &RunConfig, tasks: &TaskSet) -> Result<Self> {
        Self::with_weights(
            kind,
            run.warmup_steps,
            run.warmup_pool.tasks(tasks),
            &tasks.weights(),
        )
    }

    pub fn with_weights(
        kind: BaselineKind,
        warmup_steps: u64,
        warmup_pool: Vec<TaskId>,
        weights: &[f64],
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("baseline needs at least one task".into()));
        }
        let weighted = WeightedIndex::new(weights)
            .map_err(|e| Error::Config(format!("invalid baseline weights: {e}")))?;
        if warmup_steps > 0 && warmup_pool.is_empty() {
            return Err(Error::Config("warm-up pool is empty".into()));
        }
        Ok(Self {
            kind,
            warmup_steps,
            warmup_pool,
            k: weights.len(),
            weighted,
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    /// Task for the steps following decision step `step`. One draw from `rng` per call.
    pub fn select<R: Rng + ?Sized>(&self, step: u64, rng: &mut R) -> (TaskId, DecisionSource) {
        if step < self.warmup_steps {
            let pick = self.warmup_pool[rng.gen_range(0..self.warmup_pool.len())];
            return (pick, DecisionSource::Warmup);
        }
        let idx = match self.kind {
            BaselineKind::Uniform => rng.gen_range(0..self.k),
            BaselineKind::Proportional => self.weighted.sample(rng),
        };
        (TaskId(idx), DecisionSource::Random)
    }

    fn decision(&self, step: u64, rng: &mut ExperimentRng) -> Decision {
        let (action, source) = self.select(step, rng);
        Decision {
            action,
            source,
            epsilon: None,
        }
    }
}

impl Scheduler for BaselineScheduler {
    fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::Uniform => "uniform",
            BaselineKind::Proportional => "proportional",
        }
    }

    fn num_tasks(&self) -> usize {
        self.k
    }

    fn start(&mut self, _state: Option<&StateVector>, rng: &mut ExperimentRng) -> Result<Decision> {
        Ok(self.decision(0, rng))
    }

    fn observe(&mut self, obs: &Observation<'_>, rng: &mut ExperimentRng) -> Result<Outcome> {
        Ok(Outcome {
            reward: Some(obs.interval_reward),
            next: self.decision(obs.step, rng),
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": self.name(), "warmup_steps": self.warmup_steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_task_always_chosen() {
        let b =
            BaselineScheduler::with_weights(BaselineKind::Proportional, 0, vec![], &[1.0]).unwrap();
        let mut rng = ExperimentRng::seed_from_u64(1);
        assert!((0..100).all(|s| b.select(s, &mut rng).0 == TaskId(0)));
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(BaselineScheduler::with_weights(
            BaselineKind::Proportional,
            0,
            vec![],
            &[0.0, 0.0]
        )
        .is_err());
        assert!(BaselineScheduler::with_weights(BaselineKind::Uniform, 0, vec![], &[]).is_err());
        assert!(BaselineScheduler::with_weights(BaselineKind::Uniform, 5, vec![], &[1.0]).is_err());
    }

    #[test]
    fn warmup_uses_pool() {
        let set = TaskSet::eight_task_default();
        let run = RunConfig::new(100, 1, 50, 0);
        let b = BaselineScheduler::new(BaselineKind::Uniform, &run, &set).unwrap();
        let mut rng = ExperimentRng::seed_from_u64(2);
        for step in 0..50 {
            let (a, src) = b.select(step, &mut rng);
            assert!(set.profiles()[a.0].warmup_eligible);
            assert_eq!(src, DecisionSource::Warmup);
        }
        assert_eq!(b.select(50, &mut rng).1, DecisionSource::Random);
    }
}
