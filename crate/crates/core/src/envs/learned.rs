//! A small multi-task logistic classifier trained by minibatch gradient descent.
//!
//! Tasks in the same family share a ground-truth direction, so the shared hidden layer
//! carries real transfer; tasks with little data overfit their heads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{splitmix64, EvalTarget, StateVector, StudentEnvironment};
use crate::error::{Error, Result};
use crate::types::{Score, TaskId, TaskProfile, TaskSet};
use crate::ExperimentRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnedConfig {
    pub tasks: Vec<TaskProfile>,
    /// Family index per task; tasks in one family share their labelling direction.
    pub families: Vec<usize>,
    pub input_dim: usize,
    pub hidden: usize,
    /// Training examples across all tasks, split by data weight.
    pub train_examples: usize,
    pub min_train_examples: usize,
    pub eval_examples: usize,
    pub probes_per_task: usize,
    pub probe_batch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Spread of each task's direction around its family direction.
    pub task_spread: f64,
    pub label_noise: f64,
}

impl Default for LearnedConfig {
    fn default() -> Self {
        Self::eight_task_default()
    }
}

impl LearnedConfig {
    pub fn eight_task_default() -> Self {
        Self {
            tasks: TaskSet::eight_task_default().into(),
            families: vec![0, 1, 2, 3, 0, 1, 2, 3],
            input_dim: 8,
            hidden: 16,
            train_examples: 4000,
            min_train_examples: 16,
            eval_examples: 200,
            probes_per_task: 25,
            probe_batch: 10,
            batch_size: 8,
            learning_rate: 0.2,
            task_spread: 0.5,
            label_noise: 0.3,
        }
    }

    pub fn validate(&self) -> Result<TaskSet> {
        let set = TaskSet::new(self.tasks.clone())?;
        if self.families.len() != set.len() {
            return Err(Error::Config(
                "families must list one entry per task".into(),
            ));
        }
        let positive = [
            self.input_dim,
            self.hidden,
            self.min_train_examples,
            self.eval_examples,
            self.probes_per_task,
            self.probe_batch,
            self.batch_size,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(
                "learned student sizes must be positive".into(),
            ));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone)]
struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    fn generate(direction: &[f64], n: usize, label_noise: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..direction.len())
                .map(|_| StandardNormal.sample(&mut *rng))
                .collect();
            let z: f64 = StandardNormal.sample(&mut *rng);
            let margin: f64 =
                x.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() + label_noise * z;
            labels.push(if margin > 0.0 { 1.0 } else { 0.0 });
            inputs.push(x);
        }
        Self { inputs, labels }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone)]
struct Model {
    /// hidden x input, row-major
    shared: Vec<f64>,
    shared_bias: Vec<f64>,
    heads: Vec<Vec<f64>>,
    head_bias: Vec<f64>,
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Model {
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.shared
            .chunks_exact(x.len())
            .zip(&self.shared_bias)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect()
    }

    fn logit(&self, task: usize, h: &[f64]) -> f64 {
        self.heads[task]
            .iter()
            .zip(h)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.head_bias[task]
    }

    /// Binary cross-entropy of one example.
    fn loss(&self, task: usize, x: &[f64], y: f64) -> f64 {
        let z = self.logit(task, &self.hidden(x));
        log1p_exp(z) - y * z
    }
}

#[derive(Debug, Clone)]
pub struct TinyLearnedStudent {
    config: LearnedConfig,
    tasks: TaskSet,
    train: Vec<Dataset>,
    eval: Vec<Dataset>,
    probes: Vec<Dataset>,
    cursors: Vec<usize>,
    model: Model,
}

impl TinyLearnedStudent {
    pub fn new(config: LearnedConfig, seed: u64) -> Result<Self> {
        let tasks = config.validate()?;
        let mut student = Self {
            tasks,
            train: Vec::new(),
            eval: Vec::new(),
            probes: Vec::new(),
            cursors: Vec::new(),
            model: Model {
                shared: Vec::new(),
                shared_bias: Vec::new(),
                heads: Vec::new(),
                head_bias: Vec::new(),
            },
            config,
        };
        student.reset(seed);
        Ok(student)
    }

    pub fn config(&self) -> &LearnedConfig {
        &self.config
    }

    pub fn train_size(&self, task: TaskId) -> usize {
        self.train[task.0].len()
    }

    /// Mean loss on one probe batch, recomputed from the stored prototype data.
    pub fn probe_batch_loss(&self, task: TaskId, batch: usize) -> f64 {
        let b = self.config.probe_batch;
        let d = &self.probes[task.0];
        let range = batch * b..(batch + 1) * b;
        range
            .clone()
            .map(|n| self.model.loss(task.0, &d.inputs[n], d.labels[n]))
            .sum::<f64>()
            / b as f64
    }

    fn mean_loss(&self, task: usize, d: &Dataset) -> f64 {
        d.inputs
            .iter()
            .zip(&d.labels)
            .map(|(x, &y)| self.model.loss(task, x, y))
            .sum::<f64>()
            / d.len() as f64
    }
}

impl StudentEnvironment for TinyLearnedStudent {
    fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    fn probes_per_task(&self) -> usize {
        self.config.probes_per_task
    }

    fn reset(&mut self, seed: u64) {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
        let dim = cfg.input_dim;
        let n_families = cfg.families.iter().max().map_or(1, |m| m + 1);
        let family_dirs: Vec<Vec<f64>> = (0..n_families)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let weights = self.tasks.weights();
        self.train.clear();
        self.eval.clear();
        self.probes.clear();
        for (k, &family) in cfg.families.iter().enumerate() {
            let dir: Vec<f64> = family_dirs[family]
                .iter()
                .map(|&v| {
                    v + cfg.task_spread * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            let n_train = ((weights[k] * cfg.train_examples as f64).round() as usize)
                .max(cfg.min_train_examples);
            let mut train = Dataset::generate(&dir, n_train, cfg.label_noise, &mut rng);
            let mut order: Vec<usize> = (0..n_train).collect();
            order.shuffle(&mut rng);
            train = Dataset {
                inputs: order.iter().map(|&i| train.inputs[i].clone()).collect(),
                labels: order.iter().map(|&i| train.labels[i]).collect(),
            };
            self.train.push(train);
            self.eval.push(Dataset::generate(
                &dir,
                cfg.eval_examples,
                cfg.label_noise,
                &mut rng,
            ));
            self.probes.push(Dataset::generate(
                &dir,
                cfg.probes_per_task * cfg.probe_batch,
                cfg.label_noise,
                &mut rng,
            ));
        }
        let bound_in = 1.0 / (dim as f64).sqrt();
        let bound_h = 1.0 / (cfg.hidden as f64).sqrt();
        let mut uniform = |bound: f64, n: usize| -> Vec<f64> {
            use rand::Rng;
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        self.model = Model {
            shared: uniform(bound_in, cfg.hidden * dim),
            shared_bias: uniform(bound_in, cfg.hidden),
            heads: (0..self.tasks.len())
                .map(|_| uniform(bound_h, cfg.hidden))
                .collect(),
            head_bias: vec![0.0; self.tasks.len()],
        };
        self.cursors = vec![0; self.tasks.len()];
    }

    /// One gradient step on the next minibatch of `task`'s training data (cycled).
    /// Does not draw from `rng`.
    fn train_on(&mut self, task: TaskId, _rng: &mut ExperimentRng) -> Result<()> {
        self.tasks.check(task)?;
        let k = task.0;
        let cfg = &self.config;
        let (dim, hidden) = (cfg.input_dim, cfg.hidden);
        let data = &self.train[k];
        let mut g_shared = vec![0.0; hidden * dim];
        let mut g_shared_bias = vec![0.0; hidden];
        let mut g_head = vec![0.0; hidden];
        let mut g_head_bias = 0.0;
        let scale = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let n = self.cursors[k];
            self.cursors[k] = (n + 1) % data.len();
            let x = &data.inputs[n];
            let h = self.model.hidden(x);
            let z = self.model.logit(k, &h);
            let dz = (sigmoid(z) - data.labels[n]) * scale;
            g_head_bias += dz;
            for u in 0..hidden {
                g_head[u] += dz * h[u];
                let dh = dz * self.model.heads[k][u] * (1.0 - h[u] * h[u]);
                g_shared_bias[u] += dh;
                for (g, &xv) in g_shared[u * dim..(u + 1) * dim].iter_mut().zip(x) {
                    *g += dh * xv;
                }
            }
        }
        let lr = cfg.learning_rate;
        let m = &mut self.model;
        m.shared
            .iter_mut()
            .zip(&g_shared)
            .for_each(|(w, g)| *w -= lr * g);
        m.shared_bias
            .iter_mut()
            .zip(&g_shared_bias)
            .for_each(|(w, g)| *w -= lr * g);
        m.heads[k]
            .iter_mut()
            .zip(&g_head)
            .for_each(|(w, g)| *w -= lr * g);
        m.head_bias[k] -= lr * g_head_bias;
        if !m.shared.iter().chain(&m.heads[k]).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("learned student after training task {task}"),
            });
        }
        Ok(())
    }

    fn eval_score(&self, target: EvalTarget) -> Result<Score> {
        let loss = match target {
            EvalTarget::Task(t) => {
                self.tasks.check(t)?;
                self.mean_loss(t.0, &self.eval[t.0])
            }
            EvalTarget::Mixed => {
                let k = self.tasks.len();
                (0..k)
                    .map(|i| self.mean_loss(i, &self.eval[i]))
                    .sum::<f64>()
                    / k as f64
            }
        };
        Score::new(-loss)
    }

    fn observe_state(&self) -> StateVector {
        let mut values = Vec::with_capacity(self.state_dim());
        for t in self.tasks.ids() {
            for b in 0..self.config.probes_per_task {
                values.push(self.probe_batch_loss(t, b));
            }
        }
        StateVector::new(values, self.config.probes_per_task)
            .expect("cross-entropy is finite and non-negative")
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "learned", "config": self.config })
    }
}
