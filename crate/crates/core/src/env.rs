//! Differential-drive navigation episodes: unicycle kinematics, a 24-beam
//! lidar, the 26-value observation and the three-outcome reward.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Rect, Vec2, World, WorldError};

pub const LIDAR_BEAMS: usize = 24;
pub const OBS_DIM: usize = LIDAR_BEAMS + 2;
pub const NUM_ACTIONS: usize = 5;

/// Forward speed in m/s; the robot never reverses.
pub const LINEAR_VELOCITY: f64 = 0.15;

/// Yaw rate in rad/s for each action index.
pub const ANGULAR_VELOCITIES: [f64; NUM_ACTIONS] = [-1.5, -0.75, 0.0, 0.75, 1.5];

/// Rejection sampling gives up after this many consecutive misses.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Seconds per control step.
    pub dt: f64,
    pub v_lin: f64,
    /// Arrival margin.
    pub c_d: f64,
    /// Collision threshold on the minimum lidar reading.
    pub c_o: f64,
    pub max_steps: u32,
    pub lidar_max_range: f64,
    pub lidar_beams: usize,
    pub r_arrive: f64,
    pub r_collide: f64,
    pub r_idle: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_lin: LINEAR_VELOCITY,
            c_d: 0.25,
            c_o: 0.12,
            max_steps: 500,
            lidar_max_range: 3.5,
            lidar_beams: LIDAR_BEAMS,
            r_arrive: 200.0,
            r_collide: -20.0,
            r_idle: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_owned()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.c_o >= 0.0 && self.c_o < self.c_d) {
            return bad("thresholds must satisfy 0 <= c_o < c_d");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.lidar_beams != LIDAR_BEAMS {
            return bad("lidar_beams must be 24");
        }
        if !(self.lidar_max_range.is_finite() && self.lidar_max_range > 0.0) {
            return bad("lidar_max_range must be positive");
        }
        if !(self.v_lin.is_finite() && self.v_lin > 0.0) {
            return bad("v_lin must be positive");
        }
        Ok(())
    }
}

/// Index into [`ANGULAR_VELOCITIES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action(u8);

impl Action {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_ACTIONS).then_some(Action(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn angular_velocity(self) -> f64 {
        ANGULAR_VELOCITIES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS as u8).map(Action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// One unicycle step: translate along the current heading, then turn.
    pub fn integrate(&self, v: f64, omega: f64, dt: f64) -> RobotPose {
        let (s, c) = self.theta.sin_cos();
        RobotPose {
            x: self.x + v * c * dt,
            y: self.y + v * s * dt,
            theta: wrap_angle(self.theta + omega * dt),
        }
    }
}

/// 24 normalized lidar ranges, normalized goal distance, heading error / π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation([f64; OBS_DIM]);

impl Observation {
    pub fn from_array(values: [f64; OBS_DIM]) -> Self {
        Self(values)
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        <[f64; OBS_DIM]>::try_from(values).ok().map(Self)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn lidar(&self) -> &[f64] {
        &self.0[..LIDAR_BEAMS]
    }

    pub fn dist_to_goal(&self) -> f64 {
        self.0[LIDAR_BEAMS]
    }

    pub fn heading_error(&self) -> f64 {
        self.0[LIDAR_BEAMS + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalKind {
    None,
    Arrived,
    Collided,
    Idle,
}

impl TerminalKind {
    pub fn is_terminal(self) -> bool {
        self != TerminalKind::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalKind::None => "none",
            TerminalKind::Arrived => "arrived",
            TerminalKind::Collided => "collided",
            TerminalKind::Idle => "idle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => TerminalKind::None,
            "arrived" => TerminalKind::Arrived,
            "collided" => TerminalKind::Collided,
            "idle" => TerminalKind::Idle,
            _ => return None,
        })
    }
}

impl fmt::Display for TerminalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Distance to the goal in meters.
    pub d_t: f64,
    /// Minimum raw lidar reading in meters.
    pub min_x: f64,
    pub step_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: TerminalKind,
    pub info: StepInfo,
}

/// Arrival beats collision, collision beats running out of steps.
pub fn compute_reward(d_t: f64, min_x: f64, step_index: u32, cfg: &EnvConfig) -> (f64, TerminalKind) {
    if d_t < cfg.c_d {
        (cfg.r_arrive, TerminalKind::Arrived)
    } else if min_x < cfg.c_o {
        (cfg.r_collide, TerminalKind::Collided)
    } else if step_index >= cfg.max_steps {
        (cfg.r_idle, TerminalKind::Idle)
    } else {
        (0.0, TerminalKind::None)
    }
}

/// Beam `k` points at `theta + 2πk/24`.
pub fn lidar_scan(world: &World, pose: &RobotPose, cfg: &EnvConfig) -> Result<[f64; LIDAR_BEAMS], EnvError> {
    let origin = pose.position();
    if !world.contains(origin) {
        return Err(WorldError::OutsideBounds { x: origin.x, y: origin.y }.into());
    }
    let mut out = [0.0; LIDAR_BEAMS];
    for (k, r) in out.iter_mut().enumerate() {
        let angle = pose.theta + 2.0 * PI * k as f64 / LIDAR_BEAMS as f64;
        *r = world.ray_cast_unchecked(origin, angle, cfg.lidar_max_range);
    }
    Ok(out)
}

/// `diagonal` normalizes the goal distance (the arena's bounding-box diagonal).
pub fn assemble_observation(
    pose: &RobotPose,
    goal: Vec2,
    raw_lidar: &[f64; LIDAR_BEAMS],
    diagonal: f64,
    cfg: &EnvConfig,
) -> Observation {
    let mut v = [0.0; OBS_DIM];
    for (dst, r) in v.iter_mut().zip(raw_lidar) {
        *dst = (r / cfg.lidar_max_range).clamp(0.0, 1.0);
    }
    let delta = goal - pose.position();
    v[LIDAR_BEAMS] = (delta.norm() / diagonal).min(1.0);
    v[LIDAR_BEAMS + 1] = wrap_angle(delta.y.atan2(delta.x) - pose.theta) / PI;
    Observation(v)
}

fn sample_in<R: Rng + ?Sized>(r: &Rect, rng: &mut R) -> Vec2 {
    Vec2::new(rng.gen_range(r.min.x..=r.max.x), rng.gen_range(r.min.y..=r.max.y))
}

/// Uniform goal in the goal region with clearance strictly above `clearance`.
pub fn sample_goal<R: Rng + ?Sized>(world: &World, clearance: f64, rng: &mut R) -> Result<Vec2, EnvError> {
    let region = world.goal_region();
    for _ in 0..MAX_REJECTIONS {
        let p = sample_in(&region, rng);
        if world.min_obstacle_distance(p) > clearance {
            return Ok(p);
        }
    }
    Err(EnvError::Config(format!(
        "no goal with clearance > {clearance} m found in {MAX_REJECTIONS} draws from the goal region of '{}'",
        world.name()
    )))
}

/// Optional overrides for [`NavEnv::reset_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ResetOptions {
    pub goal: Option<Vec2>,
    pub start: Option<RobotPose>,
}

/// One navigation episode at a time over a shared, immutable world.
#[derive(Debug, Clone)]
pub struct NavEnv {
    world: Arc<World>,
    cfg: EnvConfig,
    diagonal: f64,
    rng: ChaCha8Rng,
    pose: RobotPose,
    goal: Vec2,
    step_index: u32,
    done: bool,
}

impl NavEnv {
    pub fn new(world: Arc<World>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let diagonal = world.diagonal();
        Ok(Self {
            world,
            cfg,
            diagonal,
            rng: ChaCha8Rng::seed_from_u64(0),
            pose: RobotPose::new(0.0, 0.0, 0.0),
            goal: Vec2::default(),
            step_index: 0,
            // No episode yet; stepping requires a reset first.
            done: true,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn pose(&self) -> RobotPose {
        self.pose
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn step_index(&self) -> u32 {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode with a random goal and a random spawn pose.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.reset_with(seed, ResetOptions::default())
    }

    pub fn reset_with(&mut self, seed: u64, opts: ResetOptions) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &self.cfg;
        let goal = match opts.goal {
            Some(g) => {
                if !self.world.goal_region().contains(g) {
                    return Err(EnvError::Domain(format!("fixed goal {g} lies outside the goal region")));
                }
                if self.world.min_obstacle_distance(g) <= cfg.c_o {
                    return Err(EnvError::Domain(format!("fixed goal {g} has clearance <= {} m", cfg.c_o)));
                }
                g
            }
            None => sample_goal(&self.world, cfg.c_d, &mut rng)?,
        };
        let pose = match opts.start {
            Some(p) => {
                if !self.world.contains(p.position()) {
                    return Err(EnvError::Domain(format!("start pose {} is outside the world", p.position())));
                }
                if p.position().distance(goal) < cfg.c_d {
                    return Err(EnvError::Domain(format!(
                        "goal {goal} is closer than {} m to the start pose",
                        cfg.c_d
                    )));
                }
                p
            }
            None => self.sample_spawn(goal, &mut rng)?,
        };
        self.rng = rng;
        self.goal = goal;
        self.pose = pose;
        self.step_index = 0;
        self.done = false;
        let scan = lidar_scan(&self.world, &self.pose, &self.cfg)?;
        Ok(assemble_observation(&self.pose, self.goal, &scan, self.diagonal, &self.cfg))
    }

    fn sample_spawn(&self, goal: Vec2, rng: &mut ChaCha8Rng) -> Result<RobotPose, EnvError> {
        let region = self.world.spawn_region();
        for _ in 0..MAX_REJECTIONS {
            let p = sample_in(&region, rng);
            let theta = wrap_angle(rng.gen_range(-PI..PI));
            if self.world.min_obstacle_distance(p) > self.cfg.c_o && p.distance(goal) >= self.cfg.c_d {
                return Ok(RobotPose::new(p.x, p.y, theta));
            }
        }
        Err(EnvError::Config(format!(
            "no spawn pose found in {MAX_REJECTIONS} draws from the spawn region of '{}'",
            self.world.name()
        )))
    }

    /// Per-episode generator for callers that need extra randomness tied to the reset seed.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::Usage("step called on a finished episode; call reset first".into()));
        }
        let cfg = &self.cfg;
        self.pose = self.pose.integrate(cfg.v_lin, action.angular_velocity(), cfg.dt);
        self.step_index += 1;
        let d_t = self.pose.position().distance(self.goal);

        let (observation, min_x) = if self.world.contains(self.pose.position()) {
            let scan = lidar_scan(&self.world, &self.pose, cfg)?;
            let min_x = scan.iter().copied().fold(f64::INFINITY, f64::min);
            (assemble_observation(&self.pose, self.goal, &scan, self.diagonal, cfg), min_x)
        } else {
            // Left the arena: treated as touching the boundary.
            let obs = assemble_observation(&self.pose, self.goal, &[0.0; LIDAR_BEAMS], self.diagonal, cfg);
            (obs, 0.0)
        };
        let (reward, terminal) = compute_reward(d_t, min_x, self.step_index, cfg);
        self.done = terminal.is_terminal();
        Ok(StepResult {
            observation,
            reward,
            terminal,
            info: StepInfo { d_t, min_x, step_index: self.step_index },
        })
    }
}
