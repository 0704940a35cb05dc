use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qnav::harness::{self, ReportFormat, RunConfig};
use qnav::world::{builtin_scenario, save_world};
use qnav::Algo;

#[derive(Parser)]
#[command(name = "qnav", version, about = "Train and evaluate DQN / Double-DQN navigation agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dqn,
    Ddqn,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Dqn => Algo::Dqn,
            AlgoArg::Ddqn => Algo::Ddqn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write episodes.csv plus checkpoints.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        scenario: u32,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        episodes: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with [env], [agent] and [run] overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print one line per episode to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Greedy evaluation of a checkpoint over four fixed goals.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        scenario: u32,
        #[arg(long)]
        trials_per_goal: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate evaluation summaries from one or more eval output directories.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Print a builtin scenario as a world file.
    World {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        scenario: u32,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { scenario, algo, episodes, seed, out, config, verbose } => {
            let mut cfg = RunConfig::new(scenario, algo.into(), episodes, seed).with_out_dir(&out);
            if let Some(path) = config {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                cfg.apply_overrides(&text)?;
            }
            if cfg.algo != Algo::from(algo) {
                bail!("--algo {} conflicts with the algorithm in the config file", Algo::from(algo));
            }
            let mut arrived = std::collections::VecDeque::with_capacity(100);
            let result = harness::train_with_progress(&cfg, |r| {
                if arrived.len() == 100 {
                    arrived.pop_front();
                }
                arrived.push_back(r.outcome == qnav::TerminalKind::Arrived);
                if verbose {
                    let rate = arrived.iter().filter(|&&a| a).count() as f64 / arrived.len() as f64;
                    eprintln!(
                        "episode {:>5}  {:<8}  steps {:>3}  reward {:>6.1}  eps {:.3}  success(100) {:.2}",
                        r.episode, r.outcome, r.steps, r.reward, r.epsilon, rate
                    );
                }
            })?;
            let arrived = result.records.iter().rev().take(100).filter(|r| r.outcome == qnav::TerminalKind::Arrived).count();
            let window = result.records.len().min(100);
            println!(
                "trained {} episodes; last {window}: {arrived} arrivals; checkpoint {}",
                result.records.len(),
                result.final_checkpoint.map(|p| p.display().to_string()).unwrap_or_default()
            );
        }
        Command::Eval { checkpoint, scenario, trials_per_goal, seed, out } => {
            let result = harness::evaluate_checkpoint(&checkpoint, scenario, trials_per_goal, seed, Some(&out))?;
            print!("{}", harness::report(&[result.summary], ReportFormat::Text)?);
        }
        Command::Report { inputs, format } => {
            let mut summaries = Vec::new();
            for dir in &inputs {
                summaries.extend(harness::read_summaries(dir).with_context(|| format!("reading {}", dir.display()))?);
            }
            let format = match format {
                FormatArg::Text => ReportFormat::Text,
                FormatArg::Csv => ReportFormat::Csv,
            };
            print!("{}", harness::report(&summaries, format)?);
        }
        Command::World { scenario } => {
            print!("{}", save_world(&builtin_scenario(scenario)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
