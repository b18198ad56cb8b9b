//! Post-hoc analyses of experiment logs and trained agents: windowed action proportions,
//! Q-network probing and convergence speed.

use serde::{Deserialize, Serialize};

use crate::dqn::DqnCheckpoint;
use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::log::ExperimentLog;
use crate::neural::MlpParams;
use crate::types::TaskId;

/// Action counts over the steps `window_start ..= window_start + width - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionWindow {
    pub window_start: u64,
    pub counts: Vec<u64>,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProportions {
    pub width: u64,
    pub windows: Vec<ProportionWindow>,
    pub total_counts: Vec<u64>,
    pub totals: Vec<f64>,
}

fn normalize(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

pub fn action_proportions(log: &ExperimentLog, width: u64) -> Result<ActionProportions> {
    if width == 0 {
        return Err(Error::Config("proportion window must be positive".into()));
    }
    if log.records.is_empty() {
        return Err(Error::Format("log has no records".into()));
    }
    let k = log.tasks.len();
    let mut windows: Vec<ProportionWindow> = Vec::new();
    for r in &log.records {
        let start = (r.step - 1) / width * width + 1;
        if windows.last().map_or(true, |w| w.window_start != start) {
            windows.push(ProportionWindow {
                window_start: start,
                counts: vec![0; k],
                fractions: Vec::new(),
            });
        }
        windows.last_mut().expect("pushed above").counts[r.action.0] += 1;
    }
    let mut total_counts = vec![0u64; k];
    for w in &mut windows {
        w.fractions = normalize(&w.counts);
        total_counts
            .iter_mut()
            .zip(&w.counts)
            .for_each(|(t, c)| *t += c);
    }
    Ok(ActionProportions {
        width,
        totals: normalize(&total_counts),
        total_counts,
        windows,
    })
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Softmaxed network outputs on `base` with `task`'s probe block multiplied by `amplification`.
pub fn probe_q_network(
    net: &MlpParams,
    base: &StateVector,
    task: TaskId,
    amplification: f64,
) -> Result<Vec<f64>> {
    if base.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: base.dim(),
        });
    }
    let probed = base.amplified(task, amplification)?;
    let out = net.forward(probed.values())?;
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "probe output".into(),
        });
    }
    Ok(softmax(&out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeNetwork {
    #[default]
    Online,
    Target,
}

impl ProbeNetwork {
    /// The network the agent used for its greedy choices.
    pub fn acting(config: &crate::dqn::DqnConfig) -> Self {
        if config.select_with_online {
            ProbeNetwork::Online
        } else {
            ProbeNetwork::Target
        }
    }

    pub fn select(self, ckpt: &DqnCheckpoint) -> &MlpParams {
        match self {
            ProbeNetwork::Online => &ckpt.online,
            ProbeNetwork::Target => &ckpt.target,
        }
    }
}

/// Row `i` holds the softmaxed Q-values when task `i`'s losses are amplified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMatrix {
    pub base_step: u64,
    pub amplification: f64,
    pub network: ProbeNetwork,
    pub rows: Vec<Vec<f64>>,
}

impl ProbeMatrix {
    pub fn compute(
        ckpt: &DqnCheckpoint,
        network: ProbeNetwork,
        base: &StateVector,
        base_step: u64,
        amplification: f64,
    ) -> Result<Self> {
        if base.num_tasks() != ckpt.num_actions {
            return Err(Error::DimensionMismatch {
                expected: ckpt.num_actions,
                got: base.num_tasks(),
            });
        }
        let net = network.select(ckpt);
        let rows = (0..ckpt.num_actions)
            .map(|i| probe_q_network(net, base, TaskId(i), amplification))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base_step,
            amplification,
            network,
            rows,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["amplified_task".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![names.get(i).cloned().unwrap_or_else(|| i.to_string())];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Step at the end of the best rolling window of `width` consecutive evaluations. Windows
/// whose means agree to within 1e-12 (relative) count as tied; the earliest wins.
pub fn steps_to_best(trace: &[(u64, f64)], width: usize) -> Result<u64> {
    if width == 0 {
        return Err(Error::Config("ensemble width must be positive".into()));
    }
    if trace.len() < width {
        return Err(Error::Format(format!(
            "evaluation trace has {} entries, at least {width} needed",
            trace.len()
        )));
    }
    let mut best: Option<(f64, u64)> = None;
    for window in trace.windows(width) {
        let mean = window.iter().map(|p| p.1).sum::<f64>() / width as f64;
        let step = window[width - 1].0;
        let better = match best {
            None => true,
            Some((b, _)) => mean - b > 1e-12 * b.abs().max(mean.abs()).max(1e-300),
        };
        if better {
            best = Some((mean, step));
        }
    }
    Ok(best.expect("at least one window").1)
}

/// Macro-average score over the low-resource tasks at every evaluation point.
pub fn lrl_macro_trace(log: &ExperimentLog) -> Vec<(u64, f64)> {
    let lrl = log.tasks.low_resource();
    log.eval_trace
        .iter()
        .map(|p| {
            (
                p.step,
                lrl.iter().map(|t| p.scores[t.0]).sum::<f64>() / lrl.len() as f64,
            )
        })
        .collect()
}

pub fn final_lrl_macro(log: &ExperimentLog) -> Option<f64> {
    lrl_macro_trace(log).last().map(|p| p.1)
}
