#ifndef QNAV_H
#define QNAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of an observation vector.
 */
#define QNAV_OBS_DIM 26

/**
 * Number of discrete actions.
 */
#define QNAV_NUM_ACTIONS 5

typedef enum {
  QNAV_STATUS_OK = 0,
  QNAV_STATUS_NULL_POINTER = 1,
  QNAV_STATUS_INVALID_ARGUMENT = 2,
  QNAV_STATUS_DOMAIN = 3,
  QNAV_STATUS_IO = 4,
  QNAV_STATUS_FORMAT = 5,
  QNAV_STATUS_USAGE = 6,
  QNAV_STATUS_PANIC = 7,
} QnavStatus;

typedef enum {
  QNAV_TERMINAL_NONE = 0,
  QNAV_TERMINAL_ARRIVED = 1,
  QNAV_TERMINAL_COLLIDED = 2,
  QNAV_TERMINAL_IDLE = 3,
} QnavTerminal;

typedef struct QnavEnv QnavEnv;

typedef struct QnavNet QnavNet;

typedef struct QnavWorld QnavWorld;

/**
 * Result of one environment step.
 */
typedef struct {
  double observation[QNAV_OBS_DIM];
  double reward;
  QnavTerminal terminal;
  /**
   * Distance to the goal in meters.
   */
  double distance;
  /**
   * Shortest raw lidar reading in meters.
   */
  double min_range;
  uint32_t step_index;
} QnavStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len`). Returns the full message length excluding the NUL, or
 * 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qnav_last_error(char *buf, size_t len);

/**
 * Builds one of the builtin arenas (1, 2 or 3).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
QnavStatus qnav_world_builtin(uint32_t scenario, QnavWorld **out);

/**
 * Parses a TOML world file held in memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
QnavStatus qnav_world_parse(const char *text, QnavWorld **out);

/**
 * Distance from `(x, y)` along `angle` to the first surface, capped at `max_range`.
 *
 * # Safety
 * `world` must come from a `qnav_world_*` constructor; `distance` must be writable.
 */
QnavStatus qnav_world_ray_cast(const QnavWorld *world,
                               double x,
                               double y,
                               double angle,
                               double max_range,
                               double *distance);

/**
 * # Safety
 * `world` must be null or a pointer obtained from this library, freed once.
 */
void qnav_world_free(QnavWorld *world);

/**
 * Creates an environment with the default configuration. The environment
 * keeps its own reference to the world, which may be freed afterwards.
 *
 * # Safety
 * `world` must come from a `qnav_world_*` constructor; `out` must be writable.
 */
QnavStatus qnav_env_new(const QnavWorld *world, QnavEnv **out);

/**
 * Starts a new episode and writes the first observation.
 *
 * # Safety
 * `env` must be valid; `observation` must point to `QNAV_OBS_DIM` doubles.
 */
QnavStatus qnav_env_reset(QnavEnv *env, uint64_t seed, double *observation);

/**
 * Applies action `action` (0..QNAV_NUM_ACTIONS) for one control period.
 *
 * # Safety
 * `env` must be valid; `result` must be writable.
 */
QnavStatus qnav_env_step(QnavEnv *env, uint32_t action, QnavStep *result);

/**
 * Writes the robot pose as `x`, `y`, `theta`.
 *
 * # Safety
 * `env` must be valid; `pose` must point to 3 doubles.
 */
QnavStatus qnav_env_pose(const QnavEnv *env, double *pose);

/**
 * # Safety
 * `env` must be null or a pointer obtained from this library, freed once.
 */
void qnav_env_free(QnavEnv *env);

/**
 * Loads the network stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
QnavStatus qnav_net_load(const char *path, QnavNet **out);

/**
 * Input and output widths of the network.
 *
 * # Safety
 * All pointers must be valid.
 */
QnavStatus qnav_net_dims(const QnavNet *net, size_t *input, size_t *output);

/**
 * Evaluates the network on `input_len` values and writes `output_len` outputs.
 *
 * # Safety
 * `input` and `output` must point to arrays of the given lengths.
 */
QnavStatus qnav_net_forward(const QnavNet *net,
                            const double *input,
                            size_t input_len,
                            double *output,
                            size_t output_len);

/**
 * Index of the largest output, lowest index on ties.
 *
 * # Safety
 * `input` must point to `input_len` doubles; `action` must be writable.
 */
QnavStatus qnav_net_greedy_action(const QnavNet *net,
                                  const double *input,
                                  size_t input_len,
                                  uint32_t *action);

/**
 * # Safety
 * `net` must be null or a pointer obtained from this library, freed once.
 */
void qnav_net_free(QnavNet *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QNAV_H */
