//! A two-state MDP whose optimal value is exactly zero, used to measure how
//! much the max operator in the DQN target inflates Q estimates compared to
//! the Double-DQN target.
//!
//! From the start state every action moves to the second state with reward 0.
//! From the second state every action ends the episode with a reward drawn
//! from a zero-mean normal distribution. All true action values are zero, so
//! any positive `max_a Q(start, a)` is estimation bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::agent::{AgentConfig, AgentError, Algo, DqnAgent, EpsilonSchedule};
use crate::env::{Observation, NUM_ACTIONS, OBS_DIM};
use crate::replay::Transition;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    /// Environment (and therefore training) steps per run.
    pub steps: u64,
    pub reward_std: f64,
    pub hidden: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub learning_starts: usize,
    /// Final stretch of training over which the start-state estimate is averaged.
    pub averaging_window: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            reward_std: 1.0,
            hidden: 32,
            gamma: 0.99,
            learning_rate: 1e-2,
            batch_size: 32,
            target_sync_interval: 2_000,
            learning_starts: 200,
            averaging_window: 5_000,
        }
    }
}

pub const START: usize = 0;
pub const SECOND: usize = 1;

/// One-hot state encoding padded to the navigation observation width.
pub fn encode(state: usize) -> Observation {
    let mut v = [0.0; OBS_DIM];
    v[state] = 1.0;
    Observation::from_array(v)
}

/// Mean of `max_a Q(start, a)` over the averaging window of one training run.
pub fn start_state_estimate(algo: Algo, seed: u64, cfg: &ToyConfig) -> Result<f64, AgentError> {
    let agent_cfg = AgentConfig {
        algo,
        gamma: cfg.gamma,
        batch_size: cfg.batch_size,
        target_sync_interval: cfg.target_sync_interval,
        epsilon: EpsilonSchedule { eps_start: 1.0, eps_end: 1.0, decay_steps: 1 },
        learning_rate: cfg.learning_rate,
        learning_starts: cfg.learning_starts,
        replay_capacity: cfg.steps as usize,
        layer_dims: vec![OBS_DIM, cfg.hidden, NUM_ACTIONS],
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(agent_cfg, seed)?;
    let mut reward_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_7e57);
    let start = encode(START);
    let second = encode(SECOND);

    let window_start = cfg.steps.saturating_sub(cfg.averaging_window);
    let (mut sum, mut count) = (0.0, 0u64);
    let mut state = START;
    for step in 0..cfg.steps {
        let t = if state == START {
            let a = agent.act(&start)?;
            state = SECOND;
            Transition { s: start, a, r: 0.0, s_next: second, done: false }
        } else {
            let a = agent.act(&second)?;
            state = START;
            let z: f64 = StandardNormal.sample(&mut reward_rng);
            let r = cfg.reward_std * z;
            // Terminal: the next-state slot is never bootstrapped from.
            Transition { s: second, a, r, s_next: start, done: true }
        };
        agent.observe(t)?;
        if step >= window_start {
            let q = agent.q_values(&start)?;
            sum += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasComparison {
    pub seed: u64,
    pub dqn: f64,
    pub ddqn: f64,
}

/// Runs both algorithms on identical seeds.
pub fn compare(seeds: &[u64], cfg: &ToyConfig) -> Result<Vec<BiasComparison>, AgentError> {
    seeds
        .iter()
        .map(|&seed| {
            Ok(BiasComparison {
                seed,
                dqn: start_state_estimate(Algo::Dqn, seed, cfg)?,
                ddqn: start_state_estimate(Algo::Ddqn, seed, cfg)?,
            })
        })
        .collect()
}
