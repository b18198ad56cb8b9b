//! Deep Q-network scheduler: an MLP maps the student's state vector to one value per task,
//! trained from a replay memory with Huber-loss TD targets and a softly updated target copy.

mod checkpoint;
mod epsilon;
mod replay;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::neural::{huber, MlpParams, RmsPropState};
use crate::runner::{Decision, Observation, Outcome, RunConfig, Scheduler};
use crate::types::{DecisionSource, TaskId, TaskSet};
use crate::ExperimentRng;

pub use checkpoint::{BufferStats, DqnCheckpoint, CHECKPOINT_FORMAT_VERSION};
pub use epsilon::EpsilonSchedule;
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub gamma: f64,
    /// Soft-update coefficient for the target network.
    pub tau: f64,
    pub lr: f64,
    pub minibatch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub replay_capacity: usize,
    pub replay_min: usize,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Steps after warm-up at which ε reaches `eps_min`.
    pub decay_horizon: u64,
    /// Pick greedy actions with the online network instead of the target network.
    pub select_with_online: bool,
    pub train_steps_per_decision: usize,
    pub rmsprop_decay: f64,
    pub rmsprop_stabilizer: f64,
    pub huber_delta: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr: 2.5e-4,
            minibatch_size: 32,
            hidden_sizes: vec![512, 512],
            replay_capacity: 10_000,
            replay_min: 1_000,
            eps_start: 1.0,
            eps_min: 0.01,
            decay_horizon: 50_000,
            select_with_online: false,
            train_steps_per_decision: 1,
            rmsprop_decay: 0.99,
            rmsprop_stabilizer: 1e-8,
            huber_delta: 1.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("invalid learning rate {}", self.lr));
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.replay_min {
            return fail(format!(
                "minibatch_size {} must be in 1..=replay_min ({})",
                self.minibatch_size, self.replay_min
            ));
        }
        if self.replay_min > self.replay_capacity {
            return fail("replay_min exceeds replay_capacity".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden_sizes must be non-empty and positive".into());
        }
        if self.train_steps_per_decision == 0 {
            return fail("train_steps_per_decision must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay)
            || self.rmsprop_stabilizer <= 0.0
            || self.huber_delta <= 0.0
        {
            return fail(
                "rmsprop_decay in [0, 1), rmsprop_stabilizer > 0 and huber_delta > 0 required"
                    .into(),
            );
        }
        EpsilonSchedule::new(self.eps_start, self.eps_min, 0, self.decay_horizon)?;
        Ok(())
    }

    pub fn layer_sizes(&self, state_dim: usize, actions: usize) -> Vec<usize> {
        let mut s = vec![state_dim];
        s.extend(&self.hidden_sizes);
        s.push(actions);
        s
    }
}

fn finite_outputs(q: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if q.iter().all(|v| v.is_finite()) {
        Ok(q)
    } else {
        Err(Error::NonFinite {
            context: format!("{what} network output"),
        })
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `y = r + gamma * max_a Q_target(s', a)` per transition. The task never terminates.
pub fn td_targets(batch: &[&Transition], gamma: f64, target: &MlpParams) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            let q = finite_outputs(target.forward(t.state_next.values())?, "target")?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

/// Mean Huber loss between `Q_online(s, a_taken)` and `targets`, and its gradient. Only
/// the output of the action actually taken receives gradient.
pub fn batch_gradient(
    online: &MlpParams,
    batch: &[&Transition],
    targets: &[f64],
    delta: f64,
) -> Result<(f64, MlpParams)> {
    if batch.len() != targets.len() || batch.is_empty() {
        return Err(Error::ShapeMismatch(
            "batch and targets differ in length".into(),
        ));
    }
    let m = batch.len() as f64;
    let mut grads = online.zeros_like();
    let mut loss = 0.0;
    let mut grad_out = vec![0.0; online.output_dim()];
    for (t, &y) in batch.iter().zip(targets) {
        let cache = online.forward_cached(t.state_prev.values())?;
        let a = t.action.0;
        let q = *cache.output().get(a).ok_or(Error::InvalidTask {
            index: a,
            count: online.output_dim(),
        })?;
        let (value, slope) = huber(q - y, delta);
        loss += value / m;
        grad_out.iter_mut().for_each(|g| *g = 0.0);
        grad_out[a] = slope / m;
        online.backward(&cache, &grad_out, &mut grads)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "DQN loss".into(),
        });
    }
    Ok((loss, grads))
}

/// One RMSProp update of the online network on `batch`; returns the pre-update loss.
/// The target network is only read.
pub fn dqn_train_step(
    online: &mut MlpParams,
    target: &MlpParams,
    batch: &[&Transition],
    config: &DqnConfig,
    optimizer: &mut RmsPropState,
) -> Result<f64> {
    if target.input_dim() != online.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: online.input_dim(),
            got: target.input_dim(),
        });
    }
    let targets = td_targets(batch, config.gamma, target)?;
    let (loss, grads) = batch_gradient(online, batch, &targets, config.huber_delta)?;
    optimizer.step(online, &grads, config.lr)?;
    if !online.is_finite() {
        return Err(Error::NonFinite {
            context: "online network after update".into(),
        });
    }
    Ok(loss)
}

/// `target <- tau * online + (1 - tau) * target`, elementwise, computed as
/// `target + tau * (online - target)` so that equal networks stay bit-identical.
pub fn soft_update(online: &MlpParams, target: &mut MlpParams, tau: f64) -> Result<()> {
    if !online.same_shape(target) {
        return Err(Error::ShapeMismatch(
            "online and target networks differ".into(),
        ));
    }
    if tau == 1.0 {
        target.clone_from(online);
        return Ok(());
    }
    for (t, &o) in target.values_mut().zip(online.values()) {
        *t += tau * (o - *t);
    }
    Ok(())
}

/// ε-greedy choice: one uniform draw decides; the random branch makes one more index draw.
/// Greedy ties go to the lowest index.
pub fn dqn_select<R: Rng + ?Sized>(
    state: &StateVector,
    epsilon: f64,
    net: &MlpParams,
    rng: &mut R,
) -> Result<(TaskId, DecisionSource)> {
    if state.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: state.dim(),
        });
    }
    let r: f64 = rng.gen();
    if r < epsilon {
        return Ok((
            TaskId(rng.gen_range(0..net.output_dim())),
            DecisionSource::Random,
        ));
    }
    let q = finite_outputs(net.forward(state.values())?, "selection")?;
    Ok((TaskId(argmax(&q)), DecisionSource::Greedy))
}

/// The full agent: networks, optimizer state, replay memory and exploration schedule.
#[derive(Debug, Clone)]
pub struct DqnScheduler {
    config: DqnConfig,
    schedule: EpsilonSchedule,
    warmup_pool: Vec<TaskId>,
    k: usize,
    state_dim: usize,
    online: MlpParams,
    target: MlpParams,
    optimizer: RmsPropState,
    buffer: ReplayBuffer,
    last_state: Option<StateVector>,
    last_loss: Option<f64>,
    updates: u64,
    step: u64,
}

impl DqnScheduler {
    pub fn new(
        config: DqnConfig,
        run: &RunConfig,
        tasks: &TaskSet,
        state_dim: usize,
    ) -> Result<Self> {
        config.validate()?;
        let k = tasks.len();
        let schedule = EpsilonSchedule::new(
            config.eps_start,
            config.eps_min,
            run.warmup_steps,
            config.decay_horizon,
        )?;
        let online = MlpParams::zeros(&config.layer_sizes(state_dim, k))?;
        let optimizer = RmsPropState::new(&online, config.rmsprop_decay, config.rmsprop_stabilizer);
        let buffer = ReplayBuffer::new(config.replay_capacity, config.replay_min, state_dim)?;
        let warmup_pool = run.warmup_pool.tasks(tasks);
        if warmup_pool.is_empty() {
            return Err(Error::Config("warm-up pool is empty".into()));
        }
        Ok(Self {
            target: online.clone(),
            online,
            optimizer,
            buffer,
            schedule,
            warmup_pool,
            k,
            state_dim,
            config,
            last_state: None,
            last_loss: None,
            updates: 0,
            step: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    pub fn online(&self) -> &MlpParams {
        &self.online
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Network used for greedy action choice.
    pub fn selection_network(&self) -> &MlpParams {
        if self.config.select_with_online {
            &self.online
        } else {
            &self.target
        }
    }

    pub fn checkpoint(&self) -> DqnCheckpoint {
        DqnCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            state_dim: self.state_dim,
            num_actions: self.k,
            hidden_sizes: self.config.hidden_sizes.clone(),
            step: self.step,
            updates: self.updates,
            config: self.config.clone(),
            online: self.online.clone(),
            target: self.target.clone(),
            optimizer: self.optimizer.clone(),
            buffer: BufferStats {
                len: self.buffer.len(),
                capacity: self.buffer.capacity(),
                min_size: self.buffer.min_size(),
            },
        }
    }

    fn warmup_decision(&self, step: u64, rng: &mut ExperimentRng) -> Decision {
        let action = self.warmup_pool[rng.gen_range(0..self.warmup_pool.len())];
        Decision {
            action,
            source: DecisionSource::Warmup,
            epsilon: Some(self.schedule.epsilon_at(step)),
        }
    }

    fn train(&mut self, rng: &mut ExperimentRng) -> Result<()> {
        for _ in 0..self.config.train_steps_per_decision {
            let batch = self.buffer.sample(self.config.minibatch_size, rng)?;
            let loss = dqn_train_step(
                &mut self.online,
                &self.target,
                &batch,
                &self.config,
                &mut self.optimizer,
            )?;
            soft_update(&self.online, &mut self.target, self.config.tau)?;
            self.last_loss = Some(loss);
            self.updates += 1;
        }
        Ok(())
    }
}

impl Scheduler for DqnScheduler {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn num_tasks(&self) -> usize {
        self.k
    }

    fn needs_state(&self) -> bool {
        true
    }

    /// Draws the online network's initial weights, copies them into the target network and
    /// makes the first decision.
    fn start(&mut self, state: Option<&StateVector>, rng: &mut ExperimentRng) -> Result<Decision> {
        self.online =
            MlpParams::init_uniform(&self.config.layer_sizes(self.state_dim, self.k), rng)?;
        self.target = self.online.clone();
        self.optimizer = RmsPropState::new(
            &self.online,
            self.config.rmsprop_decay,
            self.config.rmsprop_stabilizer,
        );
        self.buffer.clear();
        self.last_loss = None;
        self.updates = 0;
        self.step = 0;
        let state = state.ok_or_else(|| Error::Config("DQN needs the initial state".into()))?;
        self.last_state = Some(state.clone());
        if self.schedule.warmup_steps > 0 {
            return Ok(self.warmup_decision(0, rng));
        }
        let eps = self.schedule.epsilon_at(0);
        let (action, source) = dqn_select(state, eps, self.selection_network(), rng)?;
        Ok(Decision {
            action,
            source,
            epsilon: Some(eps),
        })
    }

    fn observe(&mut self, obs: &Observation<'_>, rng: &mut ExperimentRng) -> Result<Outcome> {
        let state = obs
            .state
            .ok_or_else(|| Error::Config("DQN observation without state".into()))?;
        self.step = obs.step;
        if obs.step < self.schedule.warmup_steps {
            self.last_state = Some(state.clone());
            return Ok(Outcome {
                reward: None,
                next: self.warmup_decision(obs.step, rng),
            });
        }
        let reward = obs.interval_reward;
        if let Some(prev) = self.last_state.take() {
            self.buffer.push(Transition {
                state_prev: prev,
                action: obs.action,
                reward,
                state_next: state.clone(),
            })?;
        }
        if self.buffer.is_ready() {
            self.train(rng)?;
        }
        let eps = self.schedule.epsilon_at(obs.step);
        let (action, source) = dqn_select(state, eps, self.selection_network(), rng)?;
        self.last_state = Some(state.clone());
        Ok(Outcome {
            reward: Some(reward),
            next: Decision {
                action,
                source,
                epsilon: Some(eps),
            },
        })
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        let q = |net: &MlpParams| {
            self.last_state
                .as_ref()
                .and_then(|s| net.forward(s.values()).ok())
        };
        Some(serde_json::json!({
            "updates": self.updates,
            "buffer_len": self.buffer.len(),
            "last_loss": self.last_loss,
            "q_online": q(&self.online),
            "q_target": q(&self.target),
        }))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "dqn", "config": self.config })
    }
}
