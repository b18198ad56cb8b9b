mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "curriculum",
    version,
    about = "Run and analyze curriculum scheduling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every seed of an experiment spec and write its logs.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output root; overrides the spec's `output_dir`.
        #[arg(long, env = "CURRICULUM_OUT")]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing the spec's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Seeds run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize every log in a directory as proportion tables and convergence speed.
    Report {
        logs: PathBuf,
        /// Where the CSV tables go; defaults to the log directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        window: u64,
        /// Evaluations averaged per rolling window when locating the best score.
        #[arg(long, default_value_t = 4)]
        ensemble: usize,
    },
    /// Probe a trained DQN with each task's losses amplified in turn.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Step of the recorded state used as the probe base.
        #[arg(long)]
        step: u64,
        #[arg(long, default_value_t = 5.0)]
        amplification: f64,
        /// Defaults to the network the agent acted with.
        #[arg(long, value_enum)]
        network: Option<NetworkArg>,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NetworkArg {
    Online,
    Target,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            spec,
            out,
            seeds,
            jobs,
        } => commands::run(&spec, out, seeds, jobs),
        Command::Report {
            logs,
            out,
            window,
            ensemble,
        } => commands::report(&logs, out, window, ensemble),
        Command::Probe {
            checkpoint,
            log,
            step,
            amplification,
            network,
            out,
        } => {
            let network = network.map(|n| match n {
                NetworkArg::Online => curriculum_core::analysis::ProbeNetwork::Online,
                NetworkArg::Target => curriculum_core::analysis::ProbeNetwork::Target,
            });
            commands::probe(&checkpoint, &log, step, amplification, network, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
