//! Student environments: the learner whose training schedule is being optimized.

mod learned;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Score, TaskId, TaskSet};
use crate::ExperimentRng;

pub use learned::{LearnedConfig, TinyLearnedStudent};
pub use synthetic::{SyntheticConfig, SyntheticTask, SyntheticTransferStudent};

/// Per-probe losses of the student on a fixed prototype set, laid out as K contiguous
/// blocks of `probes_per_task` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    values: Vec<f64>,
    probes_per_task: usize,
}

impl StateVector {
    pub fn new(values: Vec<f64>, probes_per_task: usize) -> Result<Self> {
        if probes_per_task == 0 || values.is_empty() || values.len() % probes_per_task != 0 {
            return Err(Error::Format(format!(
                "state of length {} cannot be split into blocks of {probes_per_task}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Format(format!(
                "state entry {v} is not a finite non-negative loss"
            )));
        }
        Ok(Self {
            values,
            probes_per_task,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn probes_per_task(&self) -> usize {
        self.probes_per_task
    }

    pub fn num_tasks(&self) -> usize {
        self.values.len() / self.probes_per_task
    }

    pub fn block(&self, task: TaskId) -> &[f64] {
        let p = self.probes_per_task;
        &self.values[task.0 * p..(task.0 + 1) * p]
    }

    /// Copy of the state with every entry of `task`'s block multiplied by `factor`.
    pub fn amplified(&self, task: TaskId, factor: f64) -> Result<Self> {
        if task.0 >= self.num_tasks() {
            return Err(Error::InvalidTask {
                index: task.0,
                count: self.num_tasks(),
            });
        }
        let p = self.probes_per_task;
        let mut values = self.values.clone();
        values[task.0 * p..(task.0 + 1) * p]
            .iter_mut()
            .for_each(|v| *v *= factor);
        Self::new(values, p)
    }
}

/// What the student is evaluated on when a score is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalTarget {
    Task(TaskId),
    /// Equal-weight mix over all tasks.
    Mixed,
}

/// The learner being scheduled. Evaluation and state observation must never change
/// learning state; `train_on` performs exactly one training update.
pub trait StudentEnvironment {
    fn tasks(&self) -> &TaskSet;

    fn probes_per_task(&self) -> usize;

    fn state_dim(&self) -> usize {
        self.tasks().len() * self.probes_per_task()
    }

    /// Restores the initial learning state; all stochastic evaluation noise is keyed by `seed`.
    fn reset(&mut self, seed: u64);

    fn train_on(&mut self, task: TaskId, rng: &mut ExperimentRng) -> Result<()>;

    fn eval_score(&self, target: EvalTarget) -> Result<Score>;

    fn observe_state(&self) -> StateVector;

    /// Configuration echo for experiment logs.
    fn describe(&self) -> serde_json::Value;
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a noise stream that depends only on (key, training-step count, tag), so that
/// evaluations are reproducible and never touch the experiment generator.
pub(crate) fn keyed_seed(key: u64, steps: u64, tag: u64) -> u64 {
    splitmix64(key ^ splitmix64(steps ^ splitmix64(tag)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_blocks_and_amplification() {
        let s = StateVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        assert_eq!(s.num_tasks(), 3);
        assert_eq!(s.block(TaskId(1)), &[3.0, 4.0]);
        let a = s.amplified(TaskId(2), 5.0).unwrap();
        assert_eq!(a.values(), &[1.0, 2.0, 3.0, 4.0, 25.0, 30.0]);
        assert_eq!(s.amplified(TaskId(0), 1.0).unwrap(), s);
        assert!(s.amplified(TaskId(3), 2.0).is_err());
    }

    #[test]
    fn state_rejects_bad_values() {
        assert!(StateVector::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(StateVector::new(vec![1.0, -2.0], 2).is_err());
        assert!(StateVector::new(vec![1.0, f64::NAN], 2).is_err());
        assert!(StateVector::new(vec![], 2).is_err());
    }
}
