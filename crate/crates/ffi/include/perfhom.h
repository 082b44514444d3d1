#ifndef PERFHOM_H
#define PERFHOM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PerfhomStatus {
  PERFHOM_STATUS_OK = 0,
  PERFHOM_STATUS_NULL_POINTER = 1,
  PERFHOM_STATUS_INVALID_ARGUMENT = 2,
  PERFHOM_STATUS_HOLE_OUTSIDE_CELL = 3,
  PERFHOM_STATUS_SEPARATION_VIOLATION = 4,
  PERFHOM_STATUS_GEOMETRY_VIOLATION = 5,
  PERFHOM_STATUS_MESH_FAILURE = 6,
  PERFHOM_STATUS_SOLVER_FAILURE = 7,
  PERFHOM_STATUS_CONFIG_ERROR = 8,
  PERFHOM_STATUS_IO_ERROR = 9,
  PERFHOM_STATUS_UNAVAILABLE = 10,
  PERFHOM_STATUS_PANIC = 99,
} PerfhomStatus;

typedef enum PerfhomWeightMode {
  PERFHOM_WEIGHT_MODE_DISTANCE_TYPE = 0,
  PERFHOM_WEIGHT_MODE_GROUND_STATE = 1,
} PerfhomWeightMode;

/**
 * Hole list under construction.
 */
typedef struct PerfhomCell PerfhomCell;

/**
 * Result of a cell problem solve.
 */
typedef struct PerfhomCellSolution PerfhomCellSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *perfhom_version(void);

/**
 * Message of the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *perfhom_last_error_message(void);

/**
 * Creates an empty cell with separation constant `c0`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum PerfhomStatus perfhom_cell_new(double c0, struct PerfhomCell **out);

/**
 * Adds a disk hole. Geometry is validated when the cell is solved.
 *
 * # Safety
 * `cell` must come from [`perfhom_cell_new`] and not yet be freed.
 */
enum PerfhomStatus perfhom_cell_add_disk(struct PerfhomCell *cell,
                                         double cx,
                                         double cy,
                                         double radius);

/**
 * Adds a polygon hole from `count` interleaved `x, y` pairs.
 *
 * # Safety
 * `cell` must be live; `xy` must point to `2 * count` doubles.
 */
enum PerfhomStatus perfhom_cell_add_polygon(struct PerfhomCell *cell,
                                            const double *xy,
                                            size_t count);

/**
 * # Safety
 * `cell` must be null or come from [`perfhom_cell_new`]; it must not be used afterwards.
 */
void perfhom_cell_free(struct PerfhomCell *cell);

/**
 * Meshes the cell with `n` intervals per side and solves the corrector problems
 * for the identity coefficient.
 *
 * # Safety
 * `cell` must be live; `out` must be writable.
 */
enum PerfhomStatus perfhom_cell_problem_solve(const struct PerfhomCell *cell,
                                              uint32_t n,
                                              enum PerfhomWeightMode mode,
                                              struct PerfhomCellSolution **out);

/**
 * Writes the homogenized matrix in row-major order into `out[0..4]`.
 *
 * # Safety
 * `sol` must be live; `out` must hold 4 doubles.
 */
enum PerfhomStatus perfhom_solution_tensor(const struct PerfhomCellSolution *sol, double *out);

/**
 * Cell average of the squared weight.
 *
 * # Safety
 * `sol` must be live; `out` must be writable.
 */
enum PerfhomStatus perfhom_solution_a0(const struct PerfhomCellSolution *sol, double *out);

/**
 * First cell eigenvalue; `Unavailable` for the distance weight.
 *
 * # Safety
 * `sol` must be live; `out` must be writable.
 */
enum PerfhomStatus perfhom_solution_lambda_bar(const struct PerfhomCellSolution *sol, double *out);

/**
 * # Safety
 * `sol` must be live; `out` must be writable.
 */
enum PerfhomStatus perfhom_solution_vertex_count(const struct PerfhomCellSolution *sol,
                                                 size_t *out);

/**
 * Copies the nodal values of corrector `j` (0 or 1) into `out[0..len]`;
 * `len` must equal the vertex count.
 *
 * # Safety
 * `sol` must be live; `out` must hold `len` doubles.
 */
enum PerfhomStatus perfhom_solution_corrector(const struct PerfhomCellSolution *sol,
                                              uint32_t j,
                                              double *out,
                                              size_t len);

/**
 * # Safety
 * `sol` must be null or come from [`perfhom_cell_problem_solve`]; it must not be used afterwards.
 */
void perfhom_solution_free(struct PerfhomCellSolution *sol);

/**
 * Runs the experiment in the TOML file `config_path`, writing outputs to
 * `out_dir`. If `report_json` is non-null it receives the report, to be
 * released with [`perfhom_string_free`].
 *
 * # Safety
 * Strings must be NUL-terminated; `report_json` must be null or writable.
 */
enum PerfhomStatus perfhom_run_experiment(const char *config_path,
                                          const char *out_dir,
                                          char **report_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void perfhom_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERFHOM_H */
