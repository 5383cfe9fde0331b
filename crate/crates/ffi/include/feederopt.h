#ifndef FEEDEROPT_H
#define FEEDEROPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Return code of every fallible call.
typedef enum FoStatus {
  FO_STATUS_OK = 0,
  FO_STATUS_NULL_POINTER = 1,
  FO_STATUS_INVALID_ARGUMENT = 2,
  FO_STATUS_CONFIG = 3,
  FO_STATUS_IO = 4,
  FO_STATUS_SOLVER = 5,
  FO_STATUS_OUT_OF_RANGE = 6,
  FO_STATUS_PANIC = 7,
} FoStatus;

// Outcome class of a scenario.
typedef enum FoScenarioStatus {
  FO_SCENARIO_STATUS_SOLVED = 0,
  FO_SCENARIO_STATUS_INFEASIBLE = 1,
  FO_SCENARIO_STATUS_MAX_ITER = 2,
  FO_SCENARIO_STATUS_VIOLATION = 3,
  FO_SCENARIO_STATUS_ERROR = 4,
} FoScenarioStatus;

// PV block position, passed as `uint32_t`.
typedef enum FoPlacement {
  FO_PLACEMENT_FRONT = 0,
  FO_PLACEMENT_REAR = 1,
} FoPlacement;

// Controller, passed as `uint32_t`.
typedef enum FoController {
  FO_CONTROLLER_GLOBAL = 0,
  FO_CONTROLLER_LOCAL = 1,
  FO_CONTROLLER_NO_CONTROL = 2,
  FO_CONTROLLER_PASSIVE = 3,
} FoController;

// Which per-node, per-slot series to read.
typedef enum FoSeries {
  // Per-unit voltage magnitude.
  FO_SERIES_VOLTAGE = 0,
  FO_SERIES_ACTIVE_FLOW = 1,
  FO_SERIES_REACTIVE_FLOW = 2,
  FO_SERIES_BATTERY_RATE = 3,
  FO_SERIES_INVERTER_VAR = 4,
} FoSeries;

// Study configuration handle.
typedef struct FoConfig FoConfig;

// Solved scenario handle.
typedef struct FoScenario FoScenario;

// Scalar results of one scenario. Undefined quantities are NaN.
typedef struct FoSummary {
  enum FoScenarioStatus status;
  double delta_v;
  double loss_pu;
  double savings;
  size_t iterations;
  double primal_residual;
  double dual_residual;
  // Nodes excluding the substation; profile arrays have `nodes + 1` rows.
  size_t nodes;
  size_t slots;
} FoSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next `fo_*` call on the same thread.
const char *fo_last_error(void);

// Library version as a static NUL-terminated string.
const char *fo_version(void);

// Default study configuration.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum FoStatus fo_config_new(struct FoConfig **out);

// Parses a TOML configuration from a string.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum FoStatus fo_config_from_toml(const char *text, struct FoConfig **out);

// Reads a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FoStatus fo_config_from_path(const char *path, struct FoConfig **out);

// Sets the number of worker threads used by sweeps; 0 uses every core.
//
// # Safety
// `config` must be a live handle or null.
enum FoStatus fo_config_set_workers(struct FoConfig *config, size_t workers);

// Releases a configuration. Null is ignored.
//
// # Safety
// `config` must come from this library and not be used afterwards.
void fo_config_free(struct FoConfig *config);

// Solves one scenario on the configured feeder. `placement` is an
// `FoPlacement` and `controller` an `FoController` value. A scenario that
// the solver cannot settle still yields a handle; inspect its summary.
//
// # Safety
// `config` must be a live handle and `out` writable.
enum FoStatus fo_solve_scenario(const struct FoConfig *config,
                                double s_max,
                                double penetration,
                                uint32_t placement,
                                uint32_t controller,
                                struct FoScenario **out);

// Fills `out` with the scenario's scalar results.
//
// # Safety
// `scenario` must be a live handle and `out` writable.
enum FoStatus fo_scenario_summary(const struct FoScenario *scenario, struct FoSummary *out);

// Copies one series into `buf` as `(nodes + 1) * slots` values, node-major
// (row 0 is the substation). `series` is an `FoSeries` value. Returns
// `OutOfRange` if `len` is too small; `*written` then holds the needed size.
//
// # Safety
// `scenario` must be a live handle, `buf` valid for `len` doubles, and
// `written` writable.
enum FoStatus fo_scenario_series(const struct FoScenario *scenario,
                                 uint32_t series,
                                 double *buf,
                                 size_t len,
                                 size_t *written);

// Releases a scenario. Null is ignored.
//
// # Safety
// `scenario` must come from this library and not be used afterwards.
void fo_scenario_free(struct FoScenario *scenario);

// Runs the configured sweep, writing `results.csv` and `comparison.csv`
// into `out_dir`. `inconclusive` (may be null) receives the number of
// scenarios that were neither solved nor proven infeasible.
//
// # Safety
// `config` must be a live handle and `out_dir` a NUL-terminated string.
enum FoStatus fo_run_sweep(const struct FoConfig *config,
                           const char *out_dir,
                           size_t *inconclusive);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEEDEROPT_H */
