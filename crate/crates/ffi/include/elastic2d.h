#ifndef ELASTIC2D_H
#define ELASTIC2D_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Negative values are errors.
 */
typedef enum E2dStatus {
  E2D_STATUS_OK = 0,
  /**
   * A remove found the structure empty.
   */
  E2D_STATUS_EMPTY = 1,
  E2D_STATUS_NULL_POINTER = -1,
  E2D_STATUS_INVALID_ARGUMENT = -2,
  /**
   * A Rust panic was caught at the boundary; the structure may be unusable.
   */
  E2D_STATUS_PANIC = -3,
} E2dStatus;

typedef enum E2dKind {
  E2D_KIND_LAW_QUEUE = 0,
  E2D_KIND_LPW_QUEUE = 1,
  E2D_KIND_LPW_STACK = 2,
} E2dKind;

/**
 * Which depth a `e2d_set_depth` call targets. Only the LpW queue keeps the
 * two apart; the others treat every variant as `Both`.
 */
typedef enum E2dDepthSide {
  E2D_DEPTH_SIDE_BOTH = 0,
  E2D_DEPTH_SIDE_INSERT = 1,
  E2D_DEPTH_SIDE_REMOVE = 2,
} E2dDepthSide;

/**
 * Opaque per-thread operation handle.
 */
typedef struct E2dHandle E2dHandle;

/**
 * Opaque structure handle.
 */
typedef struct E2dStructure E2dStructure;

/**
 * Insert and remove windows plus the rank bound of the current layout.
 */
typedef struct E2dWindowInfo {
  uint64_t insert_max;
  uint32_t insert_depth;
  uint32_t insert_width;
  uint64_t remove_max;
  uint32_t remove_depth;
  uint32_t remove_width;
  uint64_t bound_k;
} E2dWindowInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a structure with room for `max_width` lanes and a first window of
 * `width` lanes by `depth` rows. The stack needs `depth >= 2`.
 *
 * # Safety
 * `out` must be null or valid for writing one pointer.
 */
enum E2dStatus e2d_create(enum E2dKind kind,
                          size_t max_width,
                          size_t width,
                          uint32_t depth,
                          struct E2dStructure **out);

/**
 * Frees a structure and every value still in it. Null is ignored.
 *
 * # Safety
 * `s` must be null or come from `e2d_create`, and no other thread may be
 * using it.
 */
void e2d_destroy(struct E2dStructure *s);

/**
 * Creates an operation handle. With `controller` nonzero, inserts through
 * this handle feed the contention-driven width controller.
 *
 * # Safety
 * `out` must be null or valid for writing one pointer.
 */
enum E2dStatus e2d_handle_create(uint64_t seed, bool controller, struct E2dHandle **out);

/**
 * # Safety
 * `h` must be null or come from `e2d_handle_create` and be unused elsewhere.
 */
void e2d_handle_destroy(struct E2dHandle *h);

/**
 * # Safety
 * `s` must be a live structure; `h` null or a live handle owned by the
 * calling thread.
 */
enum E2dStatus e2d_insert(const struct E2dStructure *s, struct E2dHandle *h, uint64_t value);

/**
 * Removes one value into `*out`. Returns `E2D_EMPTY` when none was found
 * and leaves `*out` untouched.
 *
 * # Safety
 * As for `e2d_insert`; `out` must be valid for writing.
 */
enum E2dStatus e2d_remove(const struct E2dStructure *s, struct E2dHandle *h, uint64_t *out);

/**
 * Sets the width used from the next window shift on. The value is clamped
 * to `[1, max_width]`; the stored value goes to `*stored` when non-null.
 *
 * # Safety
 * `s` must be a live structure; `stored` null or valid for writing.
 */
enum E2dStatus e2d_set_width(const struct E2dStructure *s, size_t width, size_t *stored);

/**
 * Sets the depth used from the next window shift on, clamped like the width.
 *
 * # Safety
 * As for `e2d_set_width`.
 */
enum E2dStatus e2d_set_depth(const struct E2dStructure *s,
                             enum E2dDepthSide side,
                             uint32_t depth,
                             uint32_t *stored);

/**
 * Resident value count. Exact only when no other thread is operating.
 *
 * # Safety
 * `s` must be a live structure; `out` valid for writing.
 */
enum E2dStatus e2d_len(const struct E2dStructure *s, size_t *out);

/**
 * # Safety
 * `s` must be a live structure; `out` valid for writing.
 */
enum E2dStatus e2d_window_info(const struct E2dStructure *s, struct E2dWindowInfo *out);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *e2d_status_str(enum E2dStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELASTIC2D_H */
