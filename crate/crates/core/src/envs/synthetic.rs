//! A cheap multi-task student with closed-form loss dynamics.
//!
//! Training on task `j` moves every task's loss toward its effective floor in proportion to
//! the transfer matrix row `transfer[j]`; untrained tasks drift back toward their initial
//! loss; tasks trained beyond their data capacity see their effective floor rise.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{keyed_seed, EvalTarget, StateVector, StudentEnvironment};
use crate::error::{Error, Result};
use crate::types::{Score, TaskId, TaskSet};
use crate::ExperimentRng;

pub const SYNTHETIC_SCHEMA_VERSION: u32 = 1;

const DEFAULT_CALIBRATION: &str = include_str!("../../configs/synthetic_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub name: String,
    /// Relative data share; normalized over the task set.
    pub data_weight: f64,
    pub warmup_eligible: bool,
    pub initial_loss: f64,
    pub floor: f64,
    /// Fraction of the gap to the floor closed by one step of direct training.
    pub learning_rate: f64,
    /// Per-step drift back toward the initial loss while the task is not trained.
    pub forgetting: f64,
    /// Rise of the effective floor per training step beyond the task's capacity.
    pub overfit_rate: f64,
    /// Upper bound on the overfit rise of the floor; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overfit_limit: Option<f64>,
    /// Height above the effective floor at which transfer from other tasks stops helping.
    #[serde(default)]
    pub transfer_floor_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub schema_version: u32,
    pub probes_per_task: usize,
    pub ceiling: f64,
    /// Standard deviation of noise on evaluation scores and probe losses.
    pub observation_noise: f64,
    /// Standard deviation of noise added to the trained task's loss on each step.
    pub training_noise: f64,
    /// Direct-training steps a task with data weight 1 absorbs before overfitting;
    /// a task's capacity is `data_weight * capacity_scale`.
    pub capacity_scale: f64,
    pub tasks: Vec<SyntheticTask>,
    /// `transfer[j][i]`: benefit to task `i` of training on task `j`.
    pub transfer: Vec<Vec<f64>>,
}

impl SyntheticConfig {
    /// The shipped eight-task calibration (language-family pairs with imbalanced data).
    pub fn eight_task_default() -> Self {
        Self::from_toml(DEFAULT_CALIBRATION).expect("built-in calibration is valid")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_CALIBRATION
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SYNTHETIC_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported synthetic schema_version {}",
                self.schema_version
            )));
        }
        let k = self.tasks.len();
        if self.probes_per_task == 0 {
            return Err(Error::Config("probes_per_task must be positive".into()));
        }
        if self.observation_noise < 0.0 || self.training_noise < 0.0 || self.capacity_scale <= 0.0 {
            return Err(Error::Config(
                "noise levels must be >= 0 and capacity_scale > 0".into(),
            ));
        }
        for t in &self.tasks {
            if !(t.floor >= 0.0 && t.floor <= t.initial_loss && t.initial_loss <= self.ceiling) {
                return Err(Error::Config(format!(
                    "task {:?}: need 0 <= floor <= initial_loss <= ceiling",
                    t.name
                )));
            }
            let unit = |v: f64| (0.0..=1.0).contains(&v);
            if !unit(t.learning_rate)
                || !unit(t.forgetting)
                || t.overfit_rate < 0.0
                || t.transfer_floor_offset < 0.0
                || t.overfit_limit.is_some_and(|m| !(m >= 0.0))
            {
                return Err(Error::Config(format!(
                    "task {:?}: rates out of range",
                    t.name
                )));
            }
        }
        if self.transfer.len() != k || self.transfer.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("transfer matrix must be {k}x{k}")));
        }
        for i in 0..k {
            for j in 0..k {
                let m = self.transfer[j][i];
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::Config(format!(
                        "transfer[{j}][{i}] = {m} outside [0, 1]"
                    )));
                }
                if j != i && m >= self.transfer[i][i] {
                    return Err(Error::Config(format!(
                        "transfer diagonal must dominate its column: transfer[{j}][{i}] >= transfer[{i}][{i}]"
                    )));
                }
            }
        }
        self.task_set()?;
        Ok(())
    }

    pub fn task_set(&self) -> Result<TaskSet> {
        let entries: Vec<(&str, f64, bool)> = self
            .tasks
            .iter()
            .map(|t| (t.name.as_str(), t.data_weight, t.warmup_eligible))
            .collect();
        TaskSet::from_weights(&entries)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTransferStudent {
    config: SyntheticConfig,
    tasks: TaskSet,
    capacity: Vec<f64>,
    losses: Vec<f64>,
    exposure: Vec<u64>,
    steps: u64,
    noise_key: u64,
}

impl SyntheticTransferStudent {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let tasks = config.task_set()?;
        let capacity = tasks
            .weights()
            .iter()
            .map(|w| w * config.capacity_scale)
            .collect();
        let losses = config.tasks.iter().map(|t| t.initial_loss).collect();
        let k = tasks.len();
        Ok(Self {
            config,
            tasks,
            capacity,
            losses,
            exposure: vec![0; k],
            steps: 0,
            noise_key: 0,
        })
    }

    pub fn eight_task_default() -> Self {
        Self::new(SyntheticConfig::eight_task_default()).expect("built-in calibration is valid")
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Current noise-free losses.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn set_losses(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.losses.len() {
            return Err(Error::DimensionMismatch {
                expected: self.losses.len(),
                got: losses.len(),
            });
        }
        self.losses.copy_from_slice(losses);
        Ok(())
    }

    pub fn exposure(&self) -> &[u64] {
        &self.exposure
    }

    pub fn steps_trained(&self) -> u64 {
        self.steps
    }

    /// Floor of task `i` after accounting for over-training.
    pub fn effective_floor(&self, i: usize) -> f64 {
        let t = &self.config.tasks[i];
        let excess = (self.exposure[i] as f64 - self.capacity[i]).max(0.0);
        let rise = t.overfit_rate * excess;
        t.floor + t.overfit_limit.map_or(rise, |m| rise.min(m))
    }

    fn noisy_loss(&self, task: usize) -> f64 {
        let sigma = self.config.observation_noise;
        if sigma == 0.0 {
            return self.losses[task];
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(keyed_seed(self.noise_key, self.steps, 1 + task as u64));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.losses[task] + sigma * z
    }

    /// Simulates `actions` from the current state on a copy of the student and writes one
    /// CSV row of noise-free losses per step (step 0 is the starting point).
    pub fn dump_trajectory<W: Write>(
        &self,
        actions: &[TaskId],
        rng: &mut ExperimentRng,
        out: W,
    ) -> Result<()> {
        let mut sim = self.clone();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "action".to_string()];
        header.extend(self.tasks.profiles().iter().map(|t| t.name.clone()));
        w.write_record(&header)?;
        let row = |step: u64, action: String, losses: &[f64]| {
            let mut r = vec![step.to_string(), action];
            r.extend(losses.iter().map(|l| l.to_string()));
            r
        };
        w.write_record(row(0, String::new(), sim.losses()))?;
        for (s, &a) in actions.iter().enumerate() {
            sim.train_on(a, rng)?;
            w.write_record(row(s as u64 + 1, a.to_string(), sim.losses()))?;
        }
        w.flush()?;
        Ok(())
    }
}

impl StudentEnvironment for SyntheticTransferStudent {
    fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    fn probes_per_task(&self) -> usize {
        self.config.probes_per_task
    }

    fn reset(&mut self, seed: u64) {
        for (l, t) in self.losses.iter_mut().zip(&self.config.tasks) {
            *l = t.initial_loss;
        }
        self.exposure.iter_mut().for_each(|e| *e = 0);
        self.steps = 0;
        self.noise_key = seed;
    }

    /// Draws one standard normal from `rng` when `training_noise > 0`, none otherwise.
    fn train_on(&mut self, task: TaskId, rng: &mut ExperimentRng) -> Result<()> {
        self.tasks.check(task)?;
        let j = task.0;
        self.exposure[j] += 1;
        let noise = if self.config.training_noise > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.config.training_noise * z
        } else {
            0.0
        };
        let row = &self.config.transfer[j];
        let ceiling = self.config.ceiling;
        let next: Vec<f64> = (0..self.losses.len())
            .map(|i| {
                let t = &self.config.tasks[i];
                let loss = self.losses[i];
                let floor = self.effective_floor(i);
                let mut v;
                if i == j {
                    v = loss - t.learning_rate * row[i] * (loss - floor) + noise;
                } else {
                    let gap = (loss - floor - t.transfer_floor_offset).max(0.0);
                    v = loss - t.learning_rate * row[i] * gap;
                    v += t.forgetting * (t.initial_loss - loss).max(0.0);
                }
                v.clamp(t.floor, ceiling)
            })
            .collect();
        self.losses = next;
        self.steps += 1;
        Ok(())
    }

    fn eval_score(&self, target: EvalTarget) -> Result<Score> {
        let loss = match target {
            EvalTarget::Task(t) => {
                self.tasks.check(t)?;
                self.noisy_loss(t.0)
            }
            EvalTarget::Mixed => {
                let k = self.losses.len();
                (0..k).map(|i| self.noisy_loss(i)).sum::<f64>() / k as f64
            }
        };
        Score::new(-loss)
    }

    fn observe_state(&self) -> StateVector {
        let p = self.config.probes_per_task;
        let sigma = self.config.observation_noise;
        let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed(self.noise_key, self.steps, 0));
        let mut values = Vec::with_capacity(self.losses.len() * p);
        for &loss in &self.losses {
            for _ in 0..p {
                let v = if sigma == 0.0 {
                    loss
                } else {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (loss + sigma * z).max(0.0)
                };
                values.push(v);
            }
        }
        StateVector::new(values, p).expect("losses are finite and non-negative")
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "synthetic", "config": self.config })
    }
}
