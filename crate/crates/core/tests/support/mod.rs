//! Scripted three-arm student and step-by-step re-simulations of both scheduling
//! algorithms, written against the algorithm listings rather than the library code.
#![allow(dead_code)]

use std::collections::VecDeque;

use curriculum_core::dqn::{dqn_train_step, DqnConfig, Transition};
use curriculum_core::envs::{EvalTarget, StateVector, StudentEnvironment};
use curriculum_core::neural::{MlpParams, RmsPropState};
use curriculum_core::{ExperimentRng, Result, Score, TaskId, TaskSet};
use rand::{Rng, RngCore, SeedableRng};

/// Arms whose loss falls linearly with the number of steps trained on them, down to a floor.
#[derive(Debug, Clone)]
pub struct Arms {
    pub tasks: TaskSet,
    pub start: Vec<f64>,
    pub slope: Vec<f64>,
    pub floor: Vec<f64>,
    pub probes: usize,
    pub trained: Vec<u64>,
}

impl Arms {
    /// Arm 0 keeps improving; arms 1 and 2 are already mastered. Arms 1 and 2 are warm-up
    /// eligible.
    pub fn one_improving() -> Self {
        Self::new(
            vec![2.0, 0.0, 0.0],
            vec![5e-4, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        )
    }

    /// Three arms with distinct learning speeds, for exercising every code path.
    pub fn mixed() -> Self {
        Self::new(
            vec![3.0, 2.0, 2.5],
            vec![4e-3, 1e-3, 2.5e-3],
            vec![1.0, 1.5, 0.5],
        )
    }

    pub fn new(start: Vec<f64>, slope: Vec<f64>, floor: Vec<f64>) -> Self {
        let tasks =
            TaskSet::from_weights(&[("a0", 0.2, false), ("a1", 0.5, true), ("a2", 0.3, true)])
                .unwrap();
        let k = start.len();
        Self {
            tasks,
            start,
            slope,
            floor,
            probes: 2,
            trained: vec![0; k],
        }
    }

    pub fn loss(&self, i: usize) -> f64 {
        (self.start[i] - self.slope[i] * self.trained[i] as f64).max(self.floor[i])
    }
}

impl StudentEnvironment for Arms {
    fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    fn probes_per_task(&self) -> usize {
        self.probes
    }

    fn reset(&mut self, _seed: u64) {
        self.trained.iter_mut().for_each(|n| *n = 0);
    }

    fn train_on(&mut self, task: TaskId, _rng: &mut ExperimentRng) -> Result<()> {
        self.tasks.check(task)?;
        self.trained[task.0] += 1;
        Ok(())
    }

    fn eval_score(&self, target: EvalTarget) -> Result<Score> {
        match target {
            EvalTarget::Task(t) => Score::new(-self.loss(t.0)),
            EvalTarget::Mixed => {
                Score::new(-(0..self.start.len()).map(|i| self.loss(i)).sum::<f64>() / 3.0)
            }
        }
    }

    fn observe_state(&self) -> StateVector {
        let values = (0..self.start.len())
            .flat_map(|i| vec![self.loss(i); self.probes])
            .collect();
        StateVector::new(values, self.probes).unwrap()
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "arms" })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Cadence {
    pub total_steps: u64,
    pub interval: u64,
    pub warmup: u64,
    /// Warm-up samples only the eligible arms instead of all arms.
    pub restricted: bool,
    pub seed: u64,
}

/// Everything the oracle saw, one entry per step or per decision.
#[derive(Debug, Default)]
pub struct Trace {
    pub actions: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub rewards: Vec<Option<f64>>,
    /// `(step, q, h)` after each observation.
    pub tables: Vec<(u64, Vec<f64>, Vec<f64>)>,
    pub buffer_lens: Vec<(u64, usize)>,
}

const ELIGIBLE: [usize; 2] = [1, 2];

fn score(arms: &Arms, i: usize) -> f64 {
    -arms.loss(i)
}

/// Teacher-student bandit: `R = X - H(A)`, `H(A) = X`, `Q(A) = αR + (1-α)Q(A)`, greedy on `|Q|`.
pub fn tscl_oracle(mut arms: Arms, c: Cadence, alpha: f64, epsilon: f64) -> Trace {
    let k = 3;
    let mut rng = ExperimentRng::seed_from_u64(c.seed);
    let _ = rng.next_u64();
    arms.reset(0);
    let mut q = vec![0.0; k];
    let mut h = vec![0.0; k];
    let mut unvisited: VecDeque<usize>;
    let mut a;
    if c.restricted && c.warmup > 0 {
        unvisited = (0..k).collect();
        a = ELIGIBLE[rng.gen_range(0..ELIGIBLE.len())];
    } else {
        unvisited = (1..k).collect();
        a = 0;
    }
    let mut out = Trace::default();
    for t in 1..=c.total_steps {
        arms.trained[a] += 1;
        out.actions.push(a);
        out.epsilons.push(epsilon);
        if t % c.interval != 0 {
            out.rewards.push(None);
            continue;
        }
        let x = score(&arms, a);
        let r = x - h[a];
        h[a] = x;
        q[a] = alpha * r + (1.0 - alpha) * q[a];
        out.rewards.push(Some(r));
        out.tables.push((t, q.clone(), h.clone()));

        let warm = t < c.warmup;
        a = if warm && c.restricted {
            ELIGIBLE[rng.gen_range(0..ELIGIBLE.len())]
        } else if let Some(u) = unvisited.pop_front() {
            u
        } else {
            let draw: f64 = rng.gen();
            if warm || draw < epsilon {
                rng.gen_range(0..k)
            } else {
                let mut best = 0;
                for i in 1..k {
                    if q[i].abs() > q[best].abs() {
                        best = i;
                    }
                }
                best
            }
        };
    }
    out
}

/// Exploration rate: `eps_start` through warm-up, then `eps_start * exp(-λ s)` with
/// `λ = ln(eps_start / eps_min) / horizon`, reaching `eps_min` at `s = horizon`.
pub fn oracle_epsilon(cfg: &DqnConfig, warmup: u64, step: u64) -> f64 {
    if step < warmup {
        return cfg.eps_start;
    }
    let s = step - warmup;
    if s >= cfg.decay_horizon {
        return cfg.eps_min;
    }
    let lambda = (cfg.eps_start / cfg.eps_min).ln() / cfg.decay_horizon as f64;
    (cfg.eps_start * (-lambda * s as f64).exp()).clamp(cfg.eps_min, cfg.eps_start)
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn observe(arms: &Arms) -> Vec<f64> {
    (0..3)
        .flat_map(|i| vec![arms.loss(i); arms.probes])
        .collect()
}

pub struct DqnOracle {
    pub trace: Trace,
    /// `(state, action, reward, next state)` in insertion order.
    pub buffer: VecDeque<(Vec<f64>, usize, f64, Vec<f64>)>,
    pub online: MlpParams,
    pub target: MlpParams,
    pub updates: u64,
}

/// Deep Q scheduler: FIFO replay with a fill gate, one minibatch update per decision,
/// soft target update, ε-greedy selection on the target network.
pub fn dqn_oracle(mut arms: Arms, c: Cadence, cfg: &DqnConfig) -> DqnOracle {
    assert!(c.restricted && !cfg.select_with_online && cfg.train_steps_per_decision == 1);
    let k = 3;
    let dim = k * arms.probes;
    let mut rng = ExperimentRng::seed_from_u64(c.seed);
    let _ = rng.next_u64();
    arms.reset(0);
    let sizes: Vec<usize> = std::iter::once(dim)
        .chain(cfg.hidden_sizes.iter().copied())
        .chain([k])
        .collect();
    let mut online = MlpParams::init_uniform(&sizes, &mut rng).unwrap();
    let mut target = online.clone();
    let mut opt = RmsPropState::new(&online, cfg.rmsprop_decay, cfg.rmsprop_stabilizer);
    let mut buffer: VecDeque<(Vec<f64>, usize, f64, Vec<f64>)> = VecDeque::new();
    let mut updates = 0;

    let choose = |state: &[f64], eps: f64, net: &MlpParams, rng: &mut ExperimentRng| -> usize {
        let draw: f64 = rng.gen();
        if draw < eps {
            rng.gen_range(0..k)
        } else {
            first_argmax(&net.forward(state).unwrap())
        }
    };

    let mut last_state = observe(&arms);
    let mut eps = oracle_epsilon(cfg, c.warmup, 0);
    let mut a = if c.warmup > 0 {
        ELIGIBLE[rng.gen_range(0..ELIGIBLE.len())]
    } else {
        choose(&last_state, eps, &target, &mut rng)
    };
    let mut start_score = score(&arms, a);
    let mut out = Trace::default();

    for t in 1..=c.total_steps {
        arms.trained[a] += 1;
        out.actions.push(a);
        out.epsilons.push(eps);
        if t % c.interval != 0 {
            out.rewards.push(None);
            continue;
        }
        let reward = score(&arms, a) - start_score;
        let state = observe(&arms);
        if t < c.warmup {
            out.rewards.push(None);
            last_state = state;
            eps = oracle_epsilon(cfg, c.warmup, t);
            a = ELIGIBLE[rng.gen_range(0..ELIGIBLE.len())];
        } else {
            out.rewards.push(Some(reward));
            if buffer.len() == cfg.replay_capacity {
                buffer.pop_front();
            }
            buffer.push_back((last_state.clone(), a, reward, state.clone()));
            if buffer.len() >= cfg.replay_min {
                let picks =
                    rand::seq::index::sample(&mut rng, buffer.len(), cfg.minibatch_size).into_vec();
                let batch: Vec<Transition> = picks
                    .iter()
                    .map(|&i| {
                        let (s, act, r, s2) = &buffer[i];
                        Transition {
                            state_prev: StateVector::new(s.clone(), arms.probes).unwrap(),
                            action: TaskId(*act),
                            reward: *r,
                            state_next: StateVector::new(s2.clone(), arms.probes).unwrap(),
                        }
                    })
                    .collect();
                let refs: Vec<&Transition> = batch.iter().collect();
                dqn_train_step(&mut online, &target, &refs, cfg, &mut opt).unwrap();
                let fresh: Vec<f64> = online.values().copied().collect();
                for (w, o) in target.values_mut().zip(fresh) {
                    *w = if cfg.tau == 1.0 {
                        o
                    } else {
                        *w + cfg.tau * (o - *w)
                    };
                }
                updates += 1;
            }
            eps = oracle_epsilon(cfg, c.warmup, t);
            a = choose(&state, eps, &target, &mut rng);
            last_state = state;
        }
        out.buffer_lens.push((t, buffer.len()));
        start_score = score(&arms, a);
    }
    DqnOracle {
        trace: out,
        buffer,
        online,
        target,
        updates,
    }
}
