/* C ABI for the neuroboids simulator. Regenerated by the build script. */

#ifndef NEUROBOIDS_H
#define NEUROBOIDS_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum NbStatus {
  /**
   * Success.
   */
  NB_OK = 0,
  /**
   * The run ended with the population extinct (still a finished run).
   */
  NB_EXTINCT = 2,
  /**
   * Invalid configuration or arguments.
   */
  NB_USAGE = 64,
  /**
   * Corrupt or mismatched artifacts.
   */
  NB_INTEGRITY = 65,
  /**
   * Numerical fault inside the simulation.
   */
  NB_FAULT = 70,
  /**
   * Filesystem error.
   */
  NB_IO = 74,
  /**
   * A null pointer was passed where data was required.
   */
  NB_NULL_POINTER = 80,
  /**
   * A string argument was not valid UTF-8.
   */
  NB_BAD_STRING = 81,
} NbStatus;

/**
 * Opaque simulation handle (stateful tasks only).
 */
typedef struct NbSimulation NbSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message raised on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *nb_last_error(void);

/**
 * Library version as a static string.
 */
const char *nb_version(void);

/**
 * Create a simulation from a TOML config string. Returns NULL on error
 * (inspect `nb_last_error`).
 *
 * # Safety
 * `config_toml` must be a valid NUL-terminated C string.
 */
struct NbSimulation *nb_simulation_from_toml(const char *config_toml);

/**
 * Create a simulation from a config file path. Returns NULL on error.
 *
 * # Safety
 * `path` must be a valid NUL-terminated C string.
 */
struct NbSimulation *nb_simulation_from_file(const char *path);

/**
 * Advance the simulation by `steps` steps (stops early on extinction).
 *
 * # Safety
 * `handle` must be a live pointer from one of the constructors.
 */
enum NbStatus nb_simulation_step(struct NbSimulation *handle, uint64_t steps);

/**
 * Number of completed steps.
 *
 * # Safety
 * `handle` must be a live pointer from one of the constructors.
 */
uint64_t nb_simulation_current_step(const struct NbSimulation *handle);

/**
 * Current number of living agents.
 *
 * # Safety
 * `handle` must be a live pointer from one of the constructors.
 */
uint64_t nb_simulation_population(const struct NbSimulation *handle);

/**
 * Total energy of the living population.
 *
 * # Safety
 * `handle` must be a live pointer from one of the constructors.
 */
double nb_simulation_total_energy(const struct NbSimulation *handle);

/**
 * Copy up to `capacity` agent positions (x, y, z triples) into `out`.
 * Returns the number of triples written; with `out == NULL` returns the
 * population size so callers can size the buffer.
 *
 * # Safety
 * `out`, when non-NULL, must point to at least `3 * capacity` doubles.
 */
size_t nb_simulation_positions(const struct NbSimulation *handle, double *out, size_t capacity);

/**
 * Write a snapshot of the current state to `path`.
 *
 * # Safety
 * `handle` must be live; `path` must be a valid NUL-terminated C string.
 */
enum NbStatus nb_simulation_write_snapshot(const struct NbSimulation *handle, const char *path);

/**
 * Destroy a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must have come from a constructor and not been freed before.
 */
void nb_simulation_free(struct NbSimulation *handle);

/**
 * Execute a complete run (any task, including stateless) from a config
 * file into an output directory, exactly like the CLI `run` subcommand.
 *
 * # Safety
 * `config_path` and `out_dir` must be valid NUL-terminated C strings.
 */
enum NbStatus nb_run(const char *config_path, const char *out_dir, size_t threads);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NEUROBOIDS_H */
