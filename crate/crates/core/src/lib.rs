//! DQN and Double-DQN agents for goal-driven mapless navigation of a
//! differential-drive robot in a simulated 2D arena with a 24-beam lidar.
//!
//! * [`world`]: arenas, raycasting, world files
//! * [`env`]: kinematics, observations, reward and episode termination
//! * [`neural`]: the Q-network, backpropagation and Adam
//! * [`checkpoint`]: the binary checkpoint format
//! * [`replay`]: experience replay
//! * [`agent`]: ε-greedy acting, TD targets, training steps
//! * [`harness`]: training runs, the evaluation protocol and reports
//! * [`toy`]: a two-state MDP that exposes max-operator overestimation

pub mod agent;
pub mod checkpoint;
pub mod env;
pub mod harness;
pub mod neural;
pub mod replay;
pub mod toy;
pub mod world;

pub use agent::{AgentConfig, Algo, DqnAgent, EpsilonSchedule};
pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta};
pub use env::{Action, EnvConfig, NavEnv, Observation, RobotPose, StepResult, TerminalKind};
pub use harness::{EpisodeRecord, EvalSummary, HarnessError, RunConfig};
pub use neural::{AdamState, Gradients, Mlp};
pub use replay::{ReplayBuffer, Transition};
pub use world::{builtin_scenario, load_world, Vec2, World};
