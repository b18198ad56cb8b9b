use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use curriculum_core::analysis::{
    action_proportions, final_lrl_macro, lrl_macro_trace, steps_to_best, ProbeMatrix, ProbeNetwork,
};
use curriculum_core::dqn::DqnCheckpoint;
use curriculum_core::experiment::{ExperimentSpec, ResolvedExperiment};
use curriculum_core::ExperimentLog;

use crate::output::write_atomic;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, specs or input files.
    Usage(anyhow::Error),
    /// A run or analysis aborted, or output could not be written.
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

pub const LOG_SUFFIX: &str = ".log.json";

/// File names for one seed's outputs, all sharing the spec's file stem.
struct SeedFiles {
    csv: PathBuf,
    json: PathBuf,
    eval: PathBuf,
    checkpoint: PathBuf,
}

impl SeedFiles {
    fn new(dir: &Path, stem: &str, seed: u64) -> Self {
        let base = format!("{stem}-seed{seed}");
        Self {
            csv: dir.join(format!("{base}.csv")),
            json: dir.join(format!("{base}{LOG_SUFFIX}")),
            eval: dir.join(format!("{base}.eval.csv")),
            checkpoint: dir.join(format!("{base}.checkpoint.json")),
        }
    }
}

pub fn run(
    spec_path: &Path,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    jobs: usize,
) -> CliResult {
    if jobs == 0 {
        return Err(usage(anyhow!("--jobs must be at least 1")));
    }
    let mut resolved = ExperimentSpec::load(spec_path).map_err(usage)?;
    if let Some(seeds) = seeds {
        resolved.spec.seeds = seeds;
        resolved
            .spec
            .validate()
            .map_err(|e| usage(anyhow!(e).context("--seeds")))?;
    }
    let dir = out.unwrap_or_else(|| resolved.spec.output_dir.clone());
    let stem = spec_path
        .file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)?;

    write_atomic(&dir.join(format!("{stem}.resolved.json")), |w| {
        serde_json::to_writer_pretty(&mut *w, &resolved)?;
        Ok(())
    })
    .map_err(runtime)?;

    let seeds = resolved.spec.seeds.clone();
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                if let Err(e) = run_one(&resolved, &dir, &stem, seed) {
                    failures.lock().expect("worker panicked").push((i, e));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("worker panicked");
    failures.sort_by_key(|f| f.0);
    for (i, e) in &failures {
        eprintln!("seed {}: {e:#}", seeds[*i]);
    }
    match failures.into_iter().next() {
        None => Ok(()),
        Some((i, e)) => Err(runtime(e.context(format!("seed {} aborted", seeds[i])))),
    }
}

fn run_one(resolved: &ResolvedExperiment, dir: &Path, stem: &str, seed: u64) -> anyhow::Result<()> {
    let outcome = resolved.run_seed(seed)?;
    let files = SeedFiles::new(dir, stem, seed);
    write_atomic(&files.csv, |w| Ok(outcome.log.write_csv(w)?))?;
    write_atomic(&files.eval, |w| Ok(outcome.log.write_eval_csv(w)?))?;
    write_atomic(&files.json, |w| Ok(outcome.log.write_json(w)?))?;
    if let Some(ckpt) = &outcome.checkpoint {
        write_atomic(&files.checkpoint, |w| Ok(ckpt.write_json(w)?))?;
    }
    match final_lrl_macro(&outcome.log) {
        Some(v) => eprintln!(
            "seed {seed}: {} steps, final low-resource macro score {v:.4}",
            outcome.log.records.len()
        ),
        None => eprintln!("seed {seed}: {} steps", outcome.log.records.len()),
    }
    Ok(())
}

fn read_log(path: &Path) -> anyhow::Result<ExperimentLog> {
    let file = fs::File::open(path)?;
    let log = ExperimentLog::read_json(std::io::BufReader::new(file))?;
    log.validate()?;
    Ok(log)
}

fn log_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(usage)?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| usage(anyhow!(e).context(format!("reading {}", dir.display()))))?
            .path();
        if path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().ends_with(LOG_SUFFIX))
        {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(usage(anyhow!("no *{LOG_SUFFIX} logs in {}", dir.display())));
    }
    Ok(paths)
}

fn log_name(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(LOG_SUFFIX).unwrap_or(&name).to_string()
}

pub fn report(dir: &Path, out: Option<PathBuf>, window: u64, ensemble: usize) -> CliResult {
    if window == 0 || ensemble == 0 {
        return Err(usage(anyhow!("--window and --ensemble must be positive")));
    }
    let paths = log_files(dir)?;
    let mut logs = Vec::with_capacity(paths.len());
    for path in &paths {
        let log = read_log(path)
            .with_context(|| format!("malformed log {}", path.display()))
            .map_err(usage)?;
        logs.push((log_name(path), log));
    }
    let names: Vec<String> = logs[0]
        .1
        .tasks
        .profiles()
        .iter()
        .map(|t| t.name.clone())
        .collect();
    for (name, log) in &logs {
        let these: Vec<&str> = log
            .tasks
            .profiles()
            .iter()
            .map(|t| t.name.as_str())
            .collect();
        if these != names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(usage(anyhow!(
                "log {name} has a different task set from {}",
                logs[0].0
            )));
        }
    }

    let out = out.unwrap_or_else(|| dir.to_path_buf());
    fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;

    let mut windows = csv::Writer::from_writer(Vec::new());
    let mut totals = csv::Writer::from_writer(Vec::new());
    let mut summary = csv::Writer::from_writer(Vec::new());
    let header = |lead: &[&str]| {
        lead.iter()
            .map(|s| s.to_string())
            .chain(names.iter().cloned())
            .collect::<Vec<_>>()
    };
    let csv_err = |e: csv::Error| runtime(e);
    windows
        .write_record(header(&["log", "scheduler", "seed", "window_start"]))
        .map_err(csv_err)?;
    totals
        .write_record(header(&["log", "scheduler", "seed"]))
        .map_err(csv_err)?;
    summary
        .write_record([
            "log",
            "scheduler",
            "seed",
            "steps",
            "final_lrl_macro",
            "steps_to_best",
        ])
        .map_err(csv_err)?;

    for (name, log) in &logs {
        let lead = [name.clone(), log.scheduler.clone(), log.seed.to_string()];
        if !log.records.is_empty() {
            let p = action_proportions(log, window).map_err(runtime)?;
            for w in &p.windows {
                let mut row = lead.to_vec();
                row.push(w.window_start.to_string());
                row.extend(w.fractions.iter().map(|v| v.to_string()));
                windows.write_record(&row).map_err(csv_err)?;
            }
            let mut row = lead.to_vec();
            row.extend(p.totals.iter().map(|v| v.to_string()));
            totals.write_record(&row).map_err(csv_err)?;
        }
        let trace = lrl_macro_trace(log);
        let best = steps_to_best(&trace, ensemble).ok();
        let mut row = lead.to_vec();
        row.push(log.records.len().to_string());
        row.push(
            final_lrl_macro(log)
                .map(|v| v.to_string())
                .unwrap_or_default(),
        );
        row.push(best.map(|s| s.to_string()).unwrap_or_default());
        summary.write_record(&row).map_err(csv_err)?;
    }

    for (file, writer) in [
        ("proportions-windows.csv", windows),
        ("proportions-total.csv", totals),
        ("summary.csv", summary),
    ] {
        let bytes = writer.into_inner().map_err(|e| runtime(anyhow!("{e}")))?;
        let path = out.join(file);
        write_atomic(&path, |w| Ok(std::io::Write::write_all(w, &bytes)?)).map_err(runtime)?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn probe(
    checkpoint: &Path,
    log_path: &Path,
    step: u64,
    amplification: f64,
    network: Option<ProbeNetwork>,
    out: Option<PathBuf>,
) -> CliResult {
    let ckpt = fs::File::open(checkpoint)
        .map_err(anyhow::Error::from)
        .and_then(|f| Ok(DqnCheckpoint::read_json(std::io::BufReader::new(f))?))
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))
        .map_err(usage)?;
    let log = read_log(log_path)
        .with_context(|| format!("malformed log {}", log_path.display()))
        .map_err(usage)?;
    let base = log.state_at(step).ok_or_else(|| {
        let recorded: Vec<String> = log.states.iter().map(|s| s.step.to_string()).collect();
        let hint = match (recorded.first(), recorded.last()) {
            (Some(a), Some(b)) => format!("recorded steps run from {a} to {b}"),
            _ => "the log records no states".to_string(),
        };
        usage(anyhow!(
            "{} has no recorded state at step {step}; {hint}",
            log_path.display()
        ))
    })?;
    if !amplification.is_finite() {
        return Err(usage(anyhow!("--amplification must be finite")));
    }
    let network = network.unwrap_or_else(|| ProbeNetwork::acting(&ckpt.config));
    let matrix =
        ProbeMatrix::compute(&ckpt, network, base, step, amplification).map_err(runtime)?;
    let names: Vec<String> = log
        .tasks
        .profiles()
        .iter()
        .map(|t| t.name.clone())
        .collect();

    let out = out.unwrap_or_else(|| {
        checkpoint
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;
    let stem = checkpoint
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = stem
        .strip_suffix(".checkpoint.json")
        .or_else(|| stem.strip_suffix(".json"))
        .unwrap_or(&stem);
    let base_name = format!("{stem}.probe-step{step}");

    let json_path = out.join(format!("{base_name}.json"));
    let doc = serde_json::json!({ "tasks": names, "probe": matrix });
    write_atomic(&json_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        Ok(())
    })
    .map_err(runtime)?;
    let csv_path = out.join(format!("{base_name}.csv"));
    write_atomic(&csv_path, |w| Ok(matrix.write_csv(&names, w)?)).map_err(runtime)?;
    println!("{}\n{}", json_path.display(), csv_path.display());
    Ok(())
}
