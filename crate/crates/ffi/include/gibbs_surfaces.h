#ifndef GIBBS_SURFACES_H
#define GIBBS_SURFACES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `GS_STATUS_OK` is zero.
 */
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_CONFIG_PARSE = 3,
  GS_STATUS_INFEASIBLE = 4,
  GS_STATUS_NOT_LIPSCHITZ = 5,
  GS_STATUS_STATE_SPACE_TOO_LARGE = 6,
  GS_STATUS_UNTILEABLE = 7,
  GS_STATUS_NO_COALESCENCE = 8,
  GS_STATUS_BUFFER_TOO_SMALL = 9,
  GS_STATUS_PANIC = 10,
  GS_STATUS_OTHER = 11,
} GsStatus;

/**
 * Opaque potential handle.
 */
typedef struct GsPotential GsPotential;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *gs_last_error_message(void);

/**
 * Preset (`domino`, `sos-abs`, ...) or a path to a TOML potential file.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` writable.
 */
enum GsStatus gs_potential_from_spec(const char *spec, struct GsPotential **out);

/**
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum GsStatus gs_potential_from_toml(const char *toml, struct GsPotential **out);

/**
 * # Safety
 * `p` must come from a constructor above and not be used afterwards. Null is ignored.
 */
void gs_potential_free(struct GsPotential *p);

/**
 * Energy of increment `eta` on the edge from `(x, y)` along e1 (`dir == 0`) or e2 (`dir == 1`).
 * Infinite energies are written as `INFINITY`.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum GsStatus gs_potential_edge_energy(const struct GsPotential *p,
                                       int64_t x,
                                       int64_t y,
                                       uint32_t dir,
                                       double eta,
                                       double *out);

/**
 * Number of domino tilings of a `w × h` rectangle of squares, in decimal.
 * `buf` receives the NUL-terminated digits; `needed` (if non-null) the required size.
 *
 * # Safety
 * `buf` must hold `len` bytes (or be null with `len == 0`).
 */
enum GsStatus gs_count_tilings(size_t w, size_t h, char *buf, size_t len, size_t *needed);

/**
 * Whether slope `slope` (e.g. `"1/2,0"`) is attainable on the `n`-torus with finite energy.
 *
 * # Safety
 * `p` must be a live handle, `slope` NUL-terminated and `out` writable.
 */
enum GsStatus gs_torus_slope_feasible(const struct GsPotential *p,
                                      size_t n,
                                      const char *slope,
                                      bool *out);

/**
 * Exact `-log Z / n²` on the `n`-torus at `slope`; `method` 0 sums states, 1 uses the transfer matrix.
 *
 * # Safety
 * `p` must be a live handle, `slope` NUL-terminated and `out` writable.
 */
enum GsStatus gs_sigma_exact(const struct GsPotential *p,
                             size_t n,
                             const char *slope,
                             uint32_t method,
                             uint64_t max_states,
                             double *out);

/**
 * Exact sample on `w × h` vertices whose outer ring is pinned to `boundary`.
 * Heights are written row by row: `out[y * w + x]`.
 *
 * # Safety
 * `p` must be a live handle and `out` hold `len` entries.
 */
enum GsStatus gs_cftp_rectangle(const struct GsPotential *p,
                                size_t w,
                                size_t h,
                                int64_t boundary,
                                uint64_t seed,
                                int64_t *out,
                                size_t len);

/**
 * Uniform domino tiling of `w × h` squares by coupling from the past, as its
 * height function on the `(w + 1) × (h + 1)` corner vertices, row by row.
 *
 * # Safety
 * `out` must hold `len` entries.
 */
enum GsStatus gs_cftp_domino(size_t w, size_t h, uint64_t seed, int64_t *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GIBBS_SURFACES_H */
