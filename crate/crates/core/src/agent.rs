//! ε-greedy acting, DQN and Double-DQN targets, minibatch training and
//! hard target-network synchronization.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Observation, NUM_ACTIONS, OBS_DIM};
use crate::neural::{argmax, AdamState, Mlp, NetError, Q_NETWORK_DIMS};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("training batch is empty")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dqn,
    Ddqn,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Ddqn => "ddqn",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Algo::Dqn => "DQN",
            Algo::Ddqn => "DDQN",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algo::Dqn),
            "ddqn" | "double-dqn" => Ok(Algo::Ddqn),
            other => Err(format!("unknown algorithm '{other}' (expected dqn or ddqn)")),
        }
    }
}

/// Linear decay from `eps_start` to `eps_end` over `decay_steps`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return Err(AgentError::Config("epsilon needs 0 <= eps_end <= eps_start <= 1".into()));
        }
        if self.decay_steps == 0 {
            return Err(AgentError::Config("epsilon decay_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn at(&self, global_step: u64) -> f64 {
        if global_step >= self.decay_steps {
            return self.eps_end;
        }
        let frac = global_step as f64 / self.decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { eps_start: 1.0, eps_end: 0.05, decay_steps: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algo: Algo,
    pub gamma: f64,
    pub batch_size: usize,
    /// Environment steps between hard copies of the online weights into the target net.
    pub target_sync_interval: u64,
    pub epsilon: EpsilonSchedule,
    pub learning_rate: f64,
    /// Global-norm clip applied to each averaged minibatch gradient.
    pub grad_clip_norm: f64,
    pub replay_capacity: usize,
    /// Training starts once the buffer holds this many transitions.
    pub learning_starts: usize,
    pub layer_dims: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ddqn,
            gamma: 0.99,
            batch_size: 64,
            target_sync_interval: 2_000,
            epsilon: EpsilonSchedule::default(),
            learning_rate: AdamState::DEFAULT_LR,
            grad_clip_norm: 10.0,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            learning_starts: 1_000,
            layer_dims: Q_NETWORK_DIMS.to_vec(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_owned()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.target_sync_interval == 0 {
            return bad("target_sync_interval must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_clip_norm.is_finite() && self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be positive");
        }
        if self.layer_dims.first() != Some(&OBS_DIM) || self.layer_dims.last() != Some(&NUM_ACTIONS) {
            return bad("layer_dims must start at 26 inputs and end at 5 actions");
        }
        self.epsilon.validate()
    }
}

/// Uniform action with probability `epsilon`, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Action::new(rng.gen_range(0..NUM_ACTIONS)).expect("in range")
    } else {
        Action::new(argmax(q_values)).expect("Q-vector has one entry per action")
    }
}

/// `r + γ·max Q_target(s′, ·)`; just `r` on terminal transitions.
pub fn dqn_target(r: f64, done: bool, q_target_next: &[f64], gamma: f64) -> f64 {
    if done {
        return r;
    }
    let best = q_target_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    r + gamma * best
}

/// The online net picks the next action, the target net scores it.
pub fn ddqn_target(r: f64, done: bool, q_online_next: &[f64], q_target_next: &[f64], gamma: f64) -> f64 {
    if done {
        return r;
    }
    r + gamma * q_target_next[argmax(q_online_next)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    /// Mean squared TD error before the update.
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a Observation>) -> Array2<f64> {
    let n = rows.len();
    let mut out = Array2::zeros((n, OBS_DIM));
    for (mut dst, obs) in out.rows_mut().into_iter().zip(rows) {
        dst.as_slice_mut().expect("standard layout").copy_from_slice(obs.as_slice());
    }
    out
}

/// TD targets for a batch under `algo`, from the frozen target net (and the
/// online net for DDQN's action choice).
pub fn batch_targets(
    algo: Algo,
    gamma: f64,
    online: &Mlp,
    target: &Mlp,
    batch: &[&Transition],
) -> Result<Vec<f64>, AgentError> {
    let next = stack(batch.iter().map(|t| &t.s_next));
    let q_target = target.forward_batch(next.view())?;
    let q_online = match algo {
        Algo::Ddqn => Some(online.forward_batch(next.view())?),
        Algo::Dqn => None,
    };
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let qt = q_target.row(i);
            let qt = qt.as_slice().expect("standard layout");
            match &q_online {
                Some(qo) => ddqn_target(t.r, t.done, qo.row(i).as_slice().expect("standard layout"), qt, gamma),
                None => dqn_target(t.r, t.done, qt, gamma),
            }
        })
        .collect())
}

/// One averaged, clipped Adam step of `online` toward the batch's TD targets.
/// `target` is read only.
pub fn train_step(
    cfg: &AgentConfig,
    online: &mut Mlp,
    target: &Mlp,
    adam: &mut AdamState,
    batch: &[&Transition],
) -> Result<TrainStats, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let targets = batch_targets(cfg.algo, cfg.gamma, online, target, batch)?;
    let states = stack(batch.iter().map(|t| &t.s));
    let actions: Vec<usize> = batch.iter().map(|t| t.a.index()).collect();
    let (loss, mut grads) = online.backward_batch(states.view(), &actions, &targets)?;
    let grad_norm = grads.global_norm();
    let clipped = grad_norm > cfg.grad_clip_norm;
    if clipped {
        log::trace!("gradient norm {grad_norm:.3} clipped to {}", cfg.grad_clip_norm);
        grads.scale(cfg.grad_clip_norm / grad_norm);
    }
    adam.step(online, &grads)?;
    Ok(TrainStats { loss, grad_norm, clipped })
}

/// Copies online into target when `global_step` is a multiple of the interval.
pub fn maybe_sync_target(cfg: &AgentConfig, online: &Mlp, target: &mut Mlp, global_step: u64) -> Result<bool, AgentError> {
    if global_step.is_multiple_of(cfg.target_sync_interval) {
        target.copy_from(online)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Networks, optimizer, replay memory and RNG of one learning agent.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: AgentConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub replay: ReplayBuffer,
    rng: ChaCha8Rng,
    global_step: u64,
    updates: u64,
    clip_events: u64,
    last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut online = Mlp::new(&config.layer_dims)?;
        online.init_weights(&mut rng);
        let target = online.clone();
        let adam = AdamState::new(&online, config.learning_rate);
        let replay = ReplayBuffer::new(config.replay_capacity);
        Ok(Self { config, online, target, adam, replay, rng, global_step: 0, updates: 0, clip_events: 0, last_loss: None })
    }

    /// Greedy-only agent around trained weights.
    pub fn from_network(config: AgentConfig, net: Mlp, seed: u64) -> Result<Self, AgentError> {
        let mut agent = Self::new(AgentConfig { layer_dims: net.dims(), ..config }, seed)?;
        agent.adam = AdamState::new(&net, agent.config.learning_rate);
        agent.target = net.clone();
        agent.online = net;
        Ok(agent)
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn clip_events(&self) -> u64 {
        self.clip_events
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.at(self.global_step)
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.forward(obs.as_slice())?)
    }

    /// ε-greedy under the current schedule value.
    pub fn act(&mut self, obs: &Observation) -> Result<Action, AgentError> {
        let q = self.q_values(obs)?;
        let eps = self.epsilon();
        Ok(select_action(&q, eps, &mut self.rng))
    }

    pub fn act_greedy(&self, obs: &Observation) -> Result<Action, AgentError> {
        Ok(Action::new(argmax(&self.q_values(obs)?)).expect("one output per action"))
    }

    /// Records a transition, trains once if the buffer is warm, then syncs the
    /// target net on schedule. Returns the training stats when an update ran.
    pub fn observe(&mut self, t: Transition) -> Result<Option<TrainStats>, AgentError> {
        self.replay.push(t);
        self.global_step += 1;
        let mut stats = None;
        if self.replay.len() >= self.config.learning_starts.max(1) {
            let idx = self.replay.sample_indices(self.config.batch_size, &mut self.rng).expect("buffer is nonempty");
            let batch: Vec<&Transition> = idx.iter().map(|&i| self.replay.get(i).expect("sampled slot")).collect();
            let s = train_step(&self.config, &mut self.online, &self.target, &mut self.adam, &batch)?;
            self.updates += 1;
            self.clip_events += u64::from(s.clipped);
            self.last_loss = Some(s.loss);
            stats = Some(s);
        }
        maybe_sync_target(&self.config, &self.online, &mut self.target, self.global_step)?;
        Ok(stats)
    }
}
