//! Experiment logs and their CSV / JSON encodings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::envs::StateVector;
use crate::error::{Error, Result};
use crate::types::{DecisionSource, StepRecord, TaskId, TaskSet};

pub const LOG_FORMAT_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 6] = [
    "step",
    "action",
    "reward",
    "score",
    "epsilon",
    "decision_source",
];

/// Per-task evaluation scores at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub step: u64,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerSnapshot {
    pub step: u64,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub format_version: u32,
    pub seed: u64,
    pub scheduler: String,
    pub tasks: TaskSet,
    pub config_snapshot: serde_json::Value,
    pub records: Vec<StepRecord>,
    #[serde(default)]
    pub eval_trace: Vec<EvalPoint>,
    #[serde(default)]
    pub states: Vec<StateSnapshot>,
    #[serde(default)]
    pub scheduler_snapshots: Vec<SchedulerSnapshot>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(field: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("line {line}: invalid number {field:?}")))
}

impl ExperimentLog {
    pub fn new(
        seed: u64,
        scheduler: &str,
        tasks: TaskSet,
        config_snapshot: serde_json::Value,
    ) -> Self {
        Self {
            format_version: LOG_FORMAT_VERSION,
            seed,
            scheduler: scheduler.to_string(),
            tasks,
            config_snapshot,
            records: Vec::new(),
            eval_trace: Vec::new(),
            states: Vec::new(),
            scheduler_snapshots: Vec::new(),
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.records.iter().map(|r| r.action)
    }

    pub fn reward_count(&self) -> usize {
        self.records.iter().filter(|r| r.reward.is_some()).count()
    }

    pub fn state_at(&self, step: u64) -> Option<&StateVector> {
        self.states
            .iter()
            .find(|s| s.step == step)
            .map(|s| &s.state)
    }

    /// Checks record ordering and the reward/score pairing.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != LOG_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported log format version {}",
                self.format_version
            )));
        }
        let k = self.tasks.len();
        let mut prev = 0;
        for r in &self.records {
            if r.step <= prev {
                return Err(Error::Format(format!(
                    "step {} is not strictly increasing",
                    r.step
                )));
            }
            prev = r.step;
            if r.action.0 >= k {
                return Err(Error::InvalidTask {
                    index: r.action.0,
                    count: k,
                });
            }
            if r.reward.is_some() != r.score.is_some() {
                return Err(Error::Format(format!(
                    "step {}: reward and score must appear together",
                    r.step
                )));
            }
            if let Some(e) = r.epsilon {
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::Format(format!(
                        "step {}: epsilon {e} outside [0, 1]",
                        r.step
                    )));
                }
            }
        }
        if self.eval_trace.iter().any(|p| p.scores.len() != k) {
            return Err(Error::Format(
                "evaluation trace entry has the wrong number of tasks".into(),
            ));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.action.to_string(),
                opt(r.reward),
                opt(r.score),
                opt(r.epsilon),
                r.decision_source.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv_records<R: Read>(input: R) -> Result<Vec<StepRecord>> {
        let mut rd = csv::Reader::from_reader(input);
        if rd.headers()?.iter().ne(CSV_HEADER) {
            return Err(Error::Format(format!(
                "CSV header must be {}",
                CSV_HEADER.join(",")
            )));
        }
        let mut out = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            if row.len() != CSV_HEADER.len() {
                return Err(Error::Format(format!("line {line}: expected 6 fields")));
            }
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::Format(format!("line {line}: invalid integer {s:?}")))
            };
            out.push(StepRecord {
                step: int(&row[0])?,
                action: TaskId(int(&row[1])? as usize),
                reward: parse_opt(&row[2], line)?,
                score: parse_opt(&row[3], line)?,
                epsilon: parse_opt(&row[4], line)?,
                decision_source: DecisionSource::parse(&row[5]).ok_or_else(|| {
                    Error::Format(format!(
                        "line {line}: unknown decision source {:?}",
                        &row[5]
                    ))
                })?,
            });
        }
        Ok(out)
    }

    /// One row per evaluation point: `step` followed by one score column per task.
    pub fn write_eval_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend(self.tasks.profiles().iter().map(|t| t.name.clone()));
        w.write_record(&header)?;
        for p in &self.eval_trace {
            let mut row = vec![p.step.to_string()];
            row.extend(p.scores.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let log: Self = serde_json::from_reader(input)?;
        log.validate()?;
        Ok(log)
    }
}
