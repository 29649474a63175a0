#ifndef CONFLICT_TESTBED_H
#define CONFLICT_TESTBED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_ARGUMENT = 2,
  TB_STATUS_IO = 3,
  TB_STATUS_FAILED = 4,
  TB_STATUS_PANIC = 5,
} TbStatus;

/**
 * Opaque set of validated scenarios.
 */
typedef struct TbScenarioSet TbScenarioSet;

/**
 * An oriented rectangle: center, heading in radians, length along the
 * heading and width across it.
 */
typedef struct TbBox {
  double center_x;
  double center_y;
  double heading;
  double length;
  double width;
} TbBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Point on a cubic Bezier curve. `control` holds x0, y0, .., x3, y3 and `t`
 * must lie in [0, 1].
 *
 * # Safety
 * `control` must point to 8 doubles; `out_x` and `out_y` must be writable.
 */
enum TbStatus tb_bezier_point(const double *control, double t, double *out_x, double *out_y);

/**
 * Whether two oriented rectangles overlap; touching counts.
 *
 * # Safety
 * `a` and `b` must point to valid boxes and `out_overlap` must be writable.
 */
enum TbStatus tb_boxes_overlap(const struct TbBox *a, const struct TbBox *b, bool *out_overlap);

/**
 * Generate `count` synthetic scenarios. `templates` is a comma separated
 * list of template names, or "all".
 *
 * # Safety
 * `templates` must be a NUL-terminated string and `out_set` writable.
 */
enum TbStatus tb_scenarios_generate(const char *templates,
                                    size_t count,
                                    uint64_t seed,
                                    struct TbScenarioSet **out_set);

/**
 * Load every scenario file in a directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out_set` writable.
 */
enum TbStatus tb_scenarios_load_dir(const char *dir, struct TbScenarioSet **out_set);

/**
 * Number of scenarios in a set.
 *
 * # Safety
 * `set` must be a live handle and `out_len` writable.
 */
enum TbStatus tb_scenarios_len(const struct TbScenarioSet *set, size_t *out_len);

/**
 * Release a scenario set. Null is ignored.
 *
 * # Safety
 * `set` must be null or a handle not yet freed.
 */
void tb_scenarios_free(struct TbScenarioSet *set);

/**
 * Roll out every scenario under one predictor and return the results file
 * as canonical JSON. `predictor` is one of cv, p4p, p4p-norelation,
 * nopredict or replay. The string must be released with [`tb_string_free`].
 *
 * # Safety
 * `set` must be a live handle, `predictor` a NUL-terminated string and
 * `out_json` writable.
 */
enum TbStatus tb_run_predictor(const struct TbScenarioSet *set,
                               const char *predictor,
                               double relation_threshold,
                               uint64_t seed,
                               size_t workers,
                               char **out_json);

/**
 * Release a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void tb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFLICT_TESTBED_H */
