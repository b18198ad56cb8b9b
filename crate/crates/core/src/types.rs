//! Shared domain types: task identities, scores and per-step log records.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of one of the K tasks a scheduler can choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub usize);

impl TaskId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    pub name: String,
    /// Share of the training data held by this task, in (0, 1].
    pub data_weight: f64,
    /// High-resource tasks that may be trained during warm-up.
    pub warmup_eligible: bool,
}

/// An ordered, validated collection of task profiles. Position in the set is the [`TaskId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskProfile>", into = "Vec<TaskProfile>")]
pub struct TaskSet {
    tasks: Vec<TaskProfile>,
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl TaskSet {
    pub fn new(tasks: Vec<TaskProfile>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("task set is empty".into()));
        }
        for t in &tasks {
            if !(t.data_weight > 0.0 && t.data_weight <= 1.0) {
                return Err(Error::Config(format!(
                    "task {:?} has data_weight {} outside (0, 1]",
                    t.name, t.data_weight
                )));
            }
        }
        let sum: f64 = tasks.iter().map(|t| t.data_weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!(
                "data weights sum to {sum}, expected 1"
            )));
        }
        if !tasks.iter().any(|t| t.warmup_eligible) {
            return Err(Error::Config("no task is warmup_eligible".into()));
        }
        Ok(Self { tasks })
    }

    /// Builds a set from raw (unnormalized) weights, rescaling them to sum to one.
    pub fn from_weights(entries: &[(&str, f64, bool)]) -> Result<Self> {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if !(total > 0.0) {
            return Err(Error::Config("all data weights are zero".into()));
        }
        Self::new(
            entries
                .iter()
                .map(|&(name, w, hrl)| TaskProfile {
                    name: name.to_string(),
                    data_weight: w / total,
                    warmup_eligible: hrl,
                })
                .collect(),
        )
    }

    /// The eight-task language set: four low-resource tasks followed by their
    /// high-resource family partners (Az/Tr, Be/Ru, Gl/Pt, Sk/Cs).
    pub fn eight_task_default() -> Self {
        Self::from_weights(&[
            ("az", 0.95, false),
            ("be", 0.72, false),
            ("gl", 1.60, false),
            ("sk", 9.79, false),
            ("tr", 29.07, true),
            ("ru", 33.21, true),
            ("pt", 8.25, true),
            ("cs", 16.42, true),
        ])
        .expect("built-in task set is valid")
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&TaskProfile> {
        self.tasks.get(id.0)
    }

    pub fn profiles(&self) -> &[TaskProfile] {
        &self.tasks
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.tasks.len()).map(TaskId)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.data_weight).collect()
    }

    pub fn warmup_pool(&self) -> Vec<TaskId> {
        self.ids()
            .filter(|id| self.tasks[id.0].warmup_eligible)
            .collect()
    }

    /// Low-resource analogs: every task that is not warm-up eligible.
    pub fn low_resource(&self) -> Vec<TaskId> {
        self.ids()
            .filter(|id| !self.tasks[id.0].warmup_eligible)
            .collect()
    }

    pub fn check(&self, id: TaskId) -> Result<()> {
        if id.0 < self.tasks.len() {
            Ok(())
        } else {
            Err(Error::InvalidTask {
                index: id.0,
                count: self.tasks.len(),
            })
        }
    }
}

impl TryFrom<Vec<TaskProfile>> for TaskSet {
    type Error = Error;

    fn try_from(tasks: Vec<TaskProfile>) -> Result<Self> {
        Self::new(tasks)
    }
}

impl From<TaskSet> for Vec<TaskProfile> {
    fn from(set: TaskSet) -> Self {
        set.tasks
    }
}

/// Negative cross-entropy of the student on evaluation data. Never NaN or infinite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::NonFinite {
                context: format!("score {value}"),
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionSource {
    Warmup,
    Random,
    Greedy,
    UnvisitedQueue,
}

impl DecisionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionSource::Warmup => "Warmup",
            DecisionSource::Random => "Random",
            DecisionSource::Greedy => "Greedy",
            DecisionSource::UnvisitedQueue => "UnvisitedQueue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Warmup" => DecisionSource::Warmup,
            "Random" => DecisionSource::Random,
            "Greedy" => DecisionSource::Greedy,
            "UnvisitedQueue" => DecisionSource::UnvisitedQueue,
            _ => return None,
        })
    }
}

/// One training step of an experiment. `reward` and `score` are present only on
/// steps where the scheduler observed a reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub action: TaskId,
    pub reward: Option<f64>,
    pub score: Option<f64>,
    pub epsilon: Option<f64>,
    pub decision_source: DecisionSource,
}
