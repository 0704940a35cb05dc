//! Seeded training runs, the four-goal evaluation protocol and comparison
//! reports.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, Algo, DqnAgent};
use crate::checkpoint::{Checkpoint, CheckpointError, CheckpointMeta};
use crate::env::{Action, EnvConfig, EnvError, NavEnv, Observation, ResetOptions, TerminalKind, NUM_ACTIONS, OBS_DIM};
use crate::neural::{argmax, Mlp};
use crate::replay::Transition;
use crate::world::{builtin_scenario, Vec2, World, WorldError};

pub const TRAIN_CSV: &str = "episodes.csv";
pub const TRIALS_CSV: &str = "trials.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const FINAL_CHECKPOINT: &str = "final.qnav";

/// Evaluation goals sit at the goal-region corners pulled in by this much.
pub const EVAL_GOAL_INSET: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint does not fit this environment: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub reward: f64,
    pub steps: u32,
    pub outcome: TerminalKind,
    pub epsilon: f64,
    /// Simulated episode duration (steps × dt), so logs stay reproducible.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_id: u32,
    pub algo: Algo,
    pub episodes: u32,
    pub seed: u64,
    /// Nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub checkpoint_every: u32,
}

/// Fraction of the planned episodes over which ε decays.
pub const EPSILON_DECAY_FRACTION: f64 = 0.3;

/// Nominal environment steps per episode used to turn an episode budget into
/// a step budget for the ε schedule.
pub const NOMINAL_EPISODE_STEPS: u64 = 100;

/// ε decay horizon for a run of `episodes` episodes.
pub fn planned_decay_steps(episodes: u32) -> u64 {
    ((episodes as f64 * NOMINAL_EPISODE_STEPS as f64 * EPSILON_DECAY_FRACTION).ceil() as u64).max(1)
}

impl RunConfig {
    pub fn new(scenario_id: u32, algo: Algo, episodes: u32, seed: u64) -> Self {
        let mut agent = AgentConfig { algo, ..AgentConfig::default() };
        agent.epsilon.decay_steps = planned_decay_steps(episodes);
        Self {
            scenario_id,
            algo,
            episodes,
            seed,
            out_dir: None,
            env: EnvConfig::default(),
            agent,
            checkpoint_every: 500,
        }
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    /// Applies a TOML override file with optional `[env]`, `[agent]` and `[run]` tables.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), HarnessError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (key, value) in table {
            let section = value
                .as_table()
                .ok_or_else(|| HarnessError::Config(format!("'{key}' must be a table")))?;
            match key.as_str() {
                "env" => self.env = merge(&self.env, section)?,
                "agent" => {
                    self.agent = merge(&self.agent, section)?;
                    if let Some(algo) = section.get("algo").and_then(|a| a.as_str()) {
                        self.algo = algo.parse().map_err(HarnessError::Config)?;
                    }
                }
                "run" => {
                    if let Some(every) = section.get("checkpoint_every").and_then(|v| v.as_integer()) {
                        self.checkpoint_every = u32::try_from(every)
                            .map_err(|_| HarnessError::Config("checkpoint_every out of range".into()))?;
                    }
                }
                other => return Err(HarnessError::Config(format!("unknown section [{other}]"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be at least 1".into()));
        }
        if self.agent.algo != self.algo {
            return Err(HarnessError::Config(format!(
                "algorithm {} conflicts with agent.algo {}",
                self.algo, self.agent.algo
            )));
        }
        builtin_scenario(self.scenario_id)?;
        self.env.validate()?;
        self.agent.validate()?;
        Ok(())
    }
}

fn merge<T: Serialize + DeserializeOwned>(base: &T, overrides: &toml::Table) -> Result<T, HarnessError> {
    fn deep(dst: &mut toml::Table, src: &toml::Table) {
        for (k, v) in src {
            match (dst.get_mut(k), v) {
                (Some(toml::Value::Table(d)), toml::Value::Table(s)) => deep(d, s),
                _ => {
                    dst.insert(k.clone(), v.clone());
                }
            }
        }
    }
    let mut table = toml::Table::try_from(base).map_err(|e| HarnessError::Config(e.to_string()))?;
    deep(&mut table, overrides);
    table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
}

/// Flattens a serializable config into `prefix.key=value` metadata entries.
fn flatten_into(meta: &mut CheckpointMeta, prefix: &str, value: &toml::Value) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten_into(meta, &format!("{prefix}.{k}"), v);
            }
        }
        leaf => meta.set(prefix, leaf.to_string()),
    }
}

/// Rebuilds a config from `prefix.*` metadata entries; `None` if there are none.
fn unflatten<T: DeserializeOwned>(meta: &CheckpointMeta, prefix: &str) -> Result<Option<T>, HarnessError> {
    let dotted = format!("{prefix}.");
    let lines: Vec<String> = meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(&dotted).map(|rest| format!("{rest} = {v}")))
        .collect();
    if lines.is_empty() {
        return Ok(None);
    }
    toml::from_str(&lines.join("\n"))
        .map(Some)
        .map_err(|e| HarnessError::Config(format!("checkpoint {prefix} metadata: {e}")))
}

fn run_meta(cfg: &RunConfig, episodes_done: u32) -> CheckpointMeta {
    let mut meta = CheckpointMeta::new()
        .with("algo", cfg.algo)
        .with("scenario", cfg.scenario_id)
        .with("episodes", episodes_done)
        .with("seed", cfg.seed);
    flatten_into(&mut meta, "agent", &toml::Value::try_from(&cfg.agent).expect("config serializes"));
    flatten_into(&mut meta, "env", &toml::Value::try_from(&cfg.env).expect("config serializes"));
    meta
}

/// Independent seeds for the agent and for each episode reset.
struct SeedStream(ChaCha8Rng);

impl SeedStream {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn next(&mut self) -> u64 {
        self.0.next_u64()
    }
}

pub struct TrainOutput {
    pub records: Vec<EpisodeRecord>,
    pub agent: DqnAgent,
    pub final_checkpoint: Option<PathBuf>,
}

/// Runs the full training loop for `cfg`, writing the episode CSV and
/// checkpoints when `cfg.out_dir` is set.
pub fn train(cfg: &RunConfig) -> Result<TrainOutput, HarnessError> {
    train_with_progress(cfg, |_| {})
}

pub fn train_with_progress(
    cfg: &RunConfig,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<TrainOutput, HarnessError> {
    cfg.validate()?;
    let mut writer = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(TRAIN_CSV);
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            Some(csv::Writer::from_writer(file))
        }
        None => None,
    };

    let world = Arc::new(builtin_scenario(cfg.scenario_id)?);
    let mut env = NavEnv::new(world, cfg.env.clone())?;
    let mut seeds = SeedStream::new(cfg.seed);
    let mut agent = DqnAgent::new(cfg.agent.clone(), seeds.next())?;
    let mut records = Vec::with_capacity(cfg.episodes as usize);
    let mut final_checkpoint = None;

    for episode in 0..cfg.episodes {
        let mut obs = env.reset(seeds.next())?;
        let mut total = 0.0;
        let outcome = loop {
            let action = agent.act(&obs)?;
            let step = env.step(action)?;
            // Running out of steps is a time limit, not a property of the state.
            let done = matches!(step.terminal, TerminalKind::Arrived | TerminalKind::Collided);
            agent.observe(Transition { s: obs, a: action, r: step.reward, s_next: step.observation, done })?;
            total += step.reward;
            obs = step.observation;
            if step.terminal.is_terminal() {
                break step.terminal;
            }
        };
        let steps = env.step_index();
        let record = EpisodeRecord {
            episode: episode + 1,
            reward: total,
            steps,
            outcome,
            epsilon: agent.epsilon(),
            wall_seconds: steps as f64 * cfg.env.dt,
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&record)?;
        }
        on_episode(&record);
        records.push(record);

        let done_eps = episode + 1;
        if let Some(dir) = &cfg.out_dir {
            let periodic = cfg.checkpoint_every > 0 && done_eps % cfg.checkpoint_every == 0;
            if periodic || done_eps == cfg.episodes {
                let ck = Checkpoint { net: agent.online.clone(), adam: agent.adam.clone(), meta: run_meta(cfg, done_eps) };
                if periodic {
                    ck.save(dir.join(format!("episode-{done_eps:06}.qnav")))?;
                }
                if done_eps == cfg.episodes {
                    let path = dir.join(FINAL_CHECKPOINT);
                    ck.save(&path)?;
                    final_checkpoint = Some(path);
                }
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush().map_err(|e| HarnessError::Io { path: PathBuf::from(TRAIN_CSV), source: e })?;
    }
    if agent.clip_events() > 0 {
        log::debug!("gradient clipping triggered on {} of {} updates", agent.clip_events(), agent.updates());
    }
    Ok(TrainOutput { records, agent, final_checkpoint })
}

/// Anything that maps an observation to an action.
pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Action;
}

impl<F: FnMut(&Observation) -> Action> Policy for F {
    fn act(&mut self, obs: &Observation) -> Action {
        self(obs)
    }
}

/// Argmax of a Q-network, no exploration.
pub struct GreedyPolicy<'a>(pub &'a Mlp);

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> Action {
        let q = self.0.forward(obs.as_slice()).expect("network input width checked by caller");
        Action::new(argmax(&q)).expect("network output width checked by caller")
    }
}

/// Turns toward the goal until roughly aligned, then drives straight.
/// Ignores obstacles; useful as a reference in empty arenas.
pub fn goal_seeking_policy(obs: &Observation) -> Action {
    let err = obs.heading_error();
    let index = if err > 0.1 {
        4
    } else if err > 0.02 {
        3
    } else if err < -0.1 {
        0
    } else if err < -0.02 {
        1
    } else {
        2
    };
    Action::new(index).expect("in range")
}

/// The four fixed evaluation goals: goal-region corners inset by 0.5 m.
pub fn eval_goals(world: &World) -> Result<[Vec2; 4], HarnessError> {
    let inner = world
        .goal_region()
        .inset(EVAL_GOAL_INSET)
        .ok_or_else(|| HarnessError::Config("goal region too small for the evaluation inset".into()))?;
    Ok(inner.corners())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub goal_index: u32,
    pub goal_x: f64,
    pub goal_y: f64,
    pub outcome: TerminalKind,
    pub steps: u32,
    pub episode_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenario_id: u32,
    pub algo: String,
    pub trials: u32,
    pub successes: u32,
    /// Percent.
    pub success_rate: f64,
    /// Over successful trials only; absent without successes.
    pub episode_time_mean: Option<f64>,
    pub episode_time_std: Option<f64>,
}

impl EvalSummary {
    pub fn from_trials(scenario_id: u32, algo: impl Into<String>, trials: &[TrialRecord]) -> Self {
        let times: Vec<f64> = trials
            .iter()
            .filter(|t| t.outcome == TerminalKind::Arrived)
            .map(|t| t.episode_time)
            .collect();
        let successes = times.len() as u32;
        let n = trials.len() as u32;
        let (mean, std) = mean_std(&times).unzip();
        Self {
            scenario_id,
            algo: algo.into(),
            trials: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { 100.0 * successes as f64 / n as f64 },
            episode_time_mean: mean,
            episode_time_std: std,
        }
    }
}

/// Mean and sample standard deviation (n − 1; zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Runs `policy` from seeded random spawns toward each fixed goal.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    world: Arc<World>,
    env_cfg: &EnvConfig,
    trials_per_goal: u32,
    seed: u64,
) -> Result<Vec<TrialRecord>, HarnessError> {
    let goals = eval_goals(&world)?;
    let mut env = NavEnv::new(world, env_cfg.clone())?;
    let mut seeds = SeedStream::new(seed);
    let mut out = Vec::with_capacity(goals.len() * trials_per_goal as usize);
    for (gi, goal) in goals.iter().enumerate() {
        for _ in 0..trials_per_goal {
            let mut obs = env.reset_with(seeds.next(), ResetOptions { goal: Some(*goal), start: None })?;
            let outcome = loop {
                let step = env.step(policy.act(&obs))?;
                obs = step.observation;
                if step.terminal.is_terminal() {
                    break step.terminal;
                }
            };
            let steps = env.step_index();
            out.push(TrialRecord {
                trial: out.len() as u32 + 1,
                goal_index: gi as u32,
                goal_x: goal.x,
                goal_y: goal.y,
                outcome,
                steps,
                episode_time: steps as f64 * env_cfg.dt,
            });
        }
    }
    Ok(out)
}

pub struct EvalOutput {
    pub summary: EvalSummary,
    pub trials: Vec<TrialRecord>,
}

/// Greedy evaluation of a trained network on a builtin scenario.
pub fn evaluate(
    net: &Mlp,
    algo: &str,
    scenario_id: u32,
    env_cfg: &EnvConfig,
    trials_per_goal: u32,
    seed: u64,
) -> Result<EvalOutput, HarnessError> {
    if net.input_dim() != OBS_DIM || net.output_dim() != NUM_ACTIONS {
        return Err(HarnessError::Mismatch(format!(
            "network maps {} inputs to {} outputs, environment needs {OBS_DIM} -> {NUM_ACTIONS}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    let world = Arc::new(builtin_scenario(scenario_id)?);
    let trials = evaluate_policy(&mut GreedyPolicy(net), world, env_cfg, trials_per_goal, seed)?;
    let summary = EvalSummary::from_trials(scenario_id, algo, &trials);
    Ok(EvalOutput { summary, trials })
}

/// Loads a checkpoint and evaluates it, writing the trial log and summary
/// when `out_dir` is given. Uses the environment settings stored in the
/// checkpoint when present.
pub fn evaluate_checkpoint(
    path: &Path,
    scenario_id: u32,
    trials_per_goal: u32,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<EvalOutput, HarnessError> {
    let ck = Checkpoint::load(path)?;
    let env_cfg: EnvConfig = unflatten(&ck.meta, "env")?.unwrap_or_default();
    let algo = ck.meta.get("algo").unwrap_or("unknown").to_owned();
    let label = algo.parse::<Algo>().map(|a| a.label().to_owned()).unwrap_or(algo);
    let out = evaluate(&ck.net, &label, scenario_id, &env_cfg, trials_per_goal, seed)?;
    if let Some(dir) = out_dir {
        write_eval(dir, &out)?;
    }
    Ok(out)
}

pub fn write_eval(dir: &Path, out: &EvalOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut w = csv::Writer::from_path(dir.join(TRIALS_CSV))?;
    for t in &out.trials {
        w.serialize(t)?;
    }
    w.flush().map_err(io_err(dir))?;
    let mut w = csv::Writer::from_path(dir.join(SUMMARY_CSV))?;
    w.serialize(&out.summary)?;
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

pub fn read_summaries(dir: &Path) -> Result<Vec<EvalSummary>, HarnessError> {
    let path = dir.join(SUMMARY_CSV);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    csv::Reader::from_reader(file).deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// One table row: scenario, algorithm, ET mean ± std in seconds, SR in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub env: u32,
    pub algorithm: String,
    pub et_mean_s: Option<f64>,
    pub et_std_s: Option<f64>,
    pub sr_percent: f64,
}

impl From<&EvalSummary> for ReportRow {
    fn from(s: &EvalSummary) -> Self {
        Self {
            env: s.scenario_id,
            algorithm: s.algo.clone(),
            et_mean_s: s.episode_time_mean,
            et_std_s: s.episode_time_std,
            sr_percent: s.success_rate,
        }
    }
}

/// Renders the comparison table.
pub fn report(summaries: &[EvalSummary], format: ReportFormat) -> Result<String, HarnessError> {
    let rows: Vec<ReportRow> = summaries.iter().map(ReportRow::from).collect();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        ReportFormat::Text => {
            let cells: Vec<[String; 4]> = rows
                .iter()
                .map(|r| {
                    let et = match (r.et_mean_s, r.et_std_s) {
                        (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
                        _ => "—".to_owned(),
                    };
                    [r.env.to_string(), r.algorithm.clone(), et, format!("{:.0}%", r.sr_percent)]
                })
                .collect();
            let header = ["Env", "Algorithm", "ET (s)", "SR"];
            let mut widths = header.map(|h| h.chars().count());
            for c in &cells {
                for (w, s) in widths.iter_mut().zip(c) {
                    *w = (*w).max(s.chars().count());
                }
            }
            let line = |c: [&str; 4]| {
                c.iter()
                    .zip(widths)
                    .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_owned()
            };
            let mut out = line(header);
            out.push('\n');
            out.push_str(&widths.map(|w| "-".repeat(w)).join("  "));
            out.push('\n');
            for c in &cells {
                out.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

/// Parses the CSV form of [`report`] back into rows.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, HarnessError> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}
