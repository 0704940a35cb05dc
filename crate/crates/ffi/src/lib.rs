//! C ABI over the `qnav` simulator and Q-network.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load` function and released by the matching `*_free`. Functions
//! return a [`QnavStatus`]; on failure a description is available from
//! [`qnav_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use qnav::env::{NUM_ACTIONS, OBS_DIM};
use qnav::neural::argmax;
use qnav::{Action, Checkpoint, EnvConfig, Mlp, NavEnv, TerminalKind, Vec2, World};

/// Length of an observation vector.
pub const QNAV_OBS_DIM: usize = 26;
/// Number of discrete actions.
pub const QNAV_NUM_ACTIONS: usize = 5;

const _: () = assert!(QNAV_OBS_DIM == OBS_DIM && QNAV_NUM_ACTIONS == NUM_ACTIONS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Io = 4,
    Format = 5,
    Usage = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnavTerminal {
    None = 0,
    Arrived = 1,
    Collided = 2,
    Idle = 3,
}

impl From<TerminalKind> for QnavTerminal {
    fn from(kind: TerminalKind) -> Self {
        match kind {
            TerminalKind::None => QnavTerminal::None,
            TerminalKind::Arrived => QnavTerminal::Arrived,
            TerminalKind::Collided => QnavTerminal::Collided,
            TerminalKind::Idle => QnavTerminal::Idle,
        }
    }
}

/// Result of one environment step.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QnavStep {
    pub observation: [f64; QNAV_OBS_DIM],
    pub reward: f64,
    pub terminal: QnavTerminal,
    /// Distance to the goal in meters.
    pub distance: f64,
    /// Shortest raw lidar reading in meters.
    pub min_range: f64,
    pub step_index: u32,
}

pub struct QnavWorld(Arc<World>);

pub struct QnavEnv(NavEnv);

pub struct QnavNet(Mlp);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(QnavStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(QnavStatus::NullPointer, format!("{what} is null"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QnavStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QnavStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QnavStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(QnavStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn world_failure(e: qnav::world::WorldError) -> Failure {
    use qnav::world::WorldError;
    let status = match e {
        WorldError::Parse(_) => QnavStatus::Format,
        WorldError::UnknownScenario(_) => QnavStatus::InvalidArgument,
        _ => QnavStatus::Domain,
    };
    Failure(status, e.to_string())
}

fn env_failure(e: qnav::env::EnvError) -> Failure {
    use qnav::env::EnvError;
    let status = match e {
        EnvError::Usage(_) => QnavStatus::Usage,
        EnvError::Config(_) => QnavStatus::InvalidArgument,
        _ => QnavStatus::Domain,
    };
    Failure(status, e.to_string())
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length excluding the NUL, or
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qnav_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds one of the builtin arenas (1, 2 or 3).
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn qnav_world_builtin(scenario: u32, out: *mut *mut QnavWorld) -> QnavStatus {
    guard(|| {
        let world = qnav::builtin_scenario(scenario).map_err(world_failure)?;
        write_out(out, QnavWorld(Arc::new(world)))
    })
}

/// Parses a TOML world file held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_world_parse(text: *const c_char, out: *mut *mut QnavWorld) -> QnavStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        let world = qnav::load_world(text).map_err(world_failure)?;
        write_out(out, QnavWorld(Arc::new(world)))
    })
}

/// Distance from `(x, y)` along `angle` to the first surface, capped at `max_range`.
///
/// # Safety
/// `world` must come from a `qnav_world_*` constructor; `distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_world_ray_cast(
    world: *const QnavWorld,
    x: f64,
    y: f64,
    angle: f64,
    max_range: f64,
    distance: *mut f64,
) -> QnavStatus {
    guard(|| {
        let world = deref(world, "world")?;
        let distance = deref_mut(distance, "distance")?;
        *distance = world.0.ray_cast(Vec2::new(x, y), angle, max_range).map_err(world_failure)?;
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qnav_world_free(world: *mut QnavWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Creates an environment with the default configuration. The environment
/// keeps its own reference to the world, which may be freed afterwards.
///
/// # Safety
/// `world` must come from a `qnav_world_*` constructor; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_env_new(world: *const QnavWorld, out: *mut *mut QnavEnv) -> QnavStatus {
    guard(|| {
        let world = deref(world, "world")?;
        let env = NavEnv::new(Arc::clone(&world.0), EnvConfig::default()).map_err(env_failure)?;
        write_out(out, QnavEnv(env))
    })
}

/// Starts a new episode and writes the first observation.
///
/// # Safety
/// `env` must be valid; `observation` must point to `QNAV_OBS_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn qnav_env_reset(env: *mut QnavEnv, seed: u64, observation: *mut f64) -> QnavStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        if observation.is_null() {
            return Err(Failure::null("observation"));
        }
        let obs = env.0.reset(seed).map_err(env_failure)?;
        ptr::copy_nonoverlapping(obs.as_slice().as_ptr(), observation, OBS_DIM);
        Ok(())
    })
}

/// Applies action `action` (0..QNAV_NUM_ACTIONS) for one control period.
///
/// # Safety
/// `env` must be valid; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_env_step(env: *mut QnavEnv, action: u32, result: *mut QnavStep) -> QnavStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        let result = deref_mut(result, "result")?;
        let action = Action::new(action as usize)
            .ok_or_else(|| Failure(QnavStatus::InvalidArgument, format!("action {action} out of range")))?;
        let step = env.0.step(action).map_err(env_failure)?;
        let mut observation = [0.0; OBS_DIM];
        observation.copy_from_slice(step.observation.as_slice());
        *result = QnavStep {
            observation,
            reward: step.reward,
            terminal: step.terminal.into(),
            distance: step.info.d_t,
            min_range: step.info.min_x,
            step_index: step.info.step_index,
        };
        Ok(())
    })
}

/// Writes the robot pose as `x`, `y`, `theta`.
///
/// # Safety
/// `env` must be valid; `pose` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn qnav_env_pose(env: *const QnavEnv, pose: *mut f64) -> QnavStatus {
    guard(|| {
        let env = deref(env, "env")?;
        if pose.is_null() {
            return Err(Failure::null("pose"));
        }
        let p = env.0.pose();
        ptr::copy_nonoverlapping([p.x, p.y, p.theta].as_ptr(), pose, 3);
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qnav_env_free(env: *mut QnavEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Loads the network stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_net_load(path: *const c_char, out: *mut *mut QnavNet) -> QnavStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let ckpt = Checkpoint::load(path).map_err(|e| {
            let status = match e {
                qnav::CheckpointError::Io(_) => QnavStatus::Io,
                _ => QnavStatus::Format,
            };
            Failure(status, e.to_string())
        })?;
        write_out(out, QnavNet(ckpt.net))
    })
}

/// Input and output widths of the network.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qnav_net_dims(net: *const QnavNet, input: *mut usize, output: *mut usize) -> QnavStatus {
    guard(|| {
        let net = deref(net, "net")?;
        *deref_mut(input, "input")? = net.0.input_dim();
        *deref_mut(output, "output")? = net.0.output_dim();
        Ok(())
    })
}

/// Evaluates the network on `input_len` values and writes `output_len` outputs.
///
/// # Safety
/// `input` and `output` must point to arrays of the given lengths.
#[no_mangle]
pub unsafe extern "C" fn qnav_net_forward(
    net: *const QnavNet,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> QnavStatus {
    guard(|| {
        let net = deref(net, "net")?;
        if input.is_null() {
            return Err(Failure::null("input"));
        }
        if output.is_null() {
            return Err(Failure::null("output"));
        }
        if output_len != net.0.output_dim() {
            return Err(Failure(
                QnavStatus::InvalidArgument,
                format!("output length {output_len}, network produces {}", net.0.output_dim()),
            ));
        }
        let q = net
            .0
            .forward(std::slice::from_raw_parts(input, input_len))
            .map_err(|e| Failure(QnavStatus::InvalidArgument, e.to_string()))?;
        ptr::copy_nonoverlapping(q.as_ptr(), output, output_len);
        Ok(())
    })
}

/// Index of the largest output, lowest index on ties.
///
/// # Safety
/// `input` must point to `input_len` doubles; `action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnav_net_greedy_action(
    net: *const QnavNet,
    input: *const f64,
    input_len: usize,
    action: *mut u32,
) -> QnavStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let action = deref_mut(action, "action")?;
        if input.is_null() {
            return Err(Failure::null("input"));
        }
        let q = net
            .0
            .forward(std::slice::from_raw_parts(input, input_len))
            .map_err(|e| Failure(QnavStatus::InvalidArgument, e.to_string()))?;
        *action = argmax(&q) as u32;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qnav_net_free(net: *mut QnavNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
