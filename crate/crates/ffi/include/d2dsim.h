#ifndef D2DSIM_H
#define D2DSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stdint.h>

typedef enum D2dStatus {
  D2D_STATUS_OK = 0,
  D2D_STATUS_NULL_POINTER = 1,
  D2D_STATUS_INVALID_UTF8 = 2,
  D2D_STATUS_PARSE = 3,
  D2D_STATUS_VALIDATION = 4,
  D2D_STATUS_DOMAIN = 5,
  D2D_STATUS_CALIBRATION = 6,
  D2D_STATUS_RUNTIME = 7,
  D2D_STATUS_PANIC = 8,
} D2dStatus;

typedef enum D2dLink {
  D2D_LINK_BTS_UE = 0,
  D2D_LINK_D2D = 1,
} D2dLink;

typedef enum D2dComposition {
  D2D_COMPOSITION_SINGLE_HOP = 0,
  D2D_COMPOSITION_TWO_HOP_MIDPOINT_RELAY = 1,
} D2dComposition;

/**
 * Calibrated radio profiles for both link classes.
 */
typedef struct D2dProfiles D2dProfiles;

/**
 * A parsed and validated scenario document.
 */
typedef struct D2dScenario D2dScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. Free the result with `d2d_string_free`.
 */
char *d2d_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void d2d_string_free(char *s);

/**
 * Calibrate the default profiles against the default anchors.
 *
 * # Safety
 * `out` must be a valid pointer to a `D2dProfiles *`.
 */
enum D2dStatus d2d_profiles_calibrate_default(uint32_t retries_per_hop, struct D2dProfiles **out);

/**
 * Calibrate the profiles of a scenario against its anchors.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum D2dStatus d2d_profiles_calibrate(const struct D2dScenario *scenario, struct D2dProfiles **out);

/**
 * Load profiles from JSON: either a bare profile set or a calibration
 * artifact written by `sim calibrate`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum D2dStatus d2d_profiles_from_json(const char *json, struct D2dProfiles **out);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer. The string is freed
 * with `d2d_string_free`.
 */
enum D2dStatus d2d_profiles_to_json(const struct D2dProfiles *p, char **out);

/**
 * # Safety
 * `p` must be NULL or a handle from this library, not yet freed.
 */
void d2d_profiles_free(struct D2dProfiles *p);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum D2dStatus d2d_mean_rssi(const struct D2dProfiles *p,
                             enum D2dLink link,
                             double distance_m,
                             double *out);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum D2dStatus d2d_estimate_distance(const struct D2dProfiles *p,
                                     enum D2dLink link,
                                     double rssi_dbm,
                                     double *out);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum D2dStatus d2d_packet_success_prob(const struct D2dProfiles *p,
                                       enum D2dLink link,
                                       double rssi_dbm,
                                       double *out);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum D2dStatus d2d_range_at_threshold(const struct D2dProfiles *p,
                                      enum D2dLink link,
                                      enum D2dComposition composition,
                                      double threshold_pct,
                                      uint32_t retries_per_hop,
                                      double *out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum D2dStatus d2d_scenario_parse(const char *json, struct D2dScenario **out);

/**
 * # Safety
 * `s` must be a live handle.
 */
enum D2dStatus d2d_scenario_set_seed(struct D2dScenario *s, uint64_t seed);

/**
 * # Safety
 * `s` must be NULL or a handle from this library, not yet freed.
 */
void d2d_scenario_free(struct D2dScenario *s);

/**
 * Run a scenario and return its report as JSON. With `trace` non-zero the
 * report carries the per-frame trace lines.
 *
 * # Safety
 * `s` and `p` must be live handles and `out` a valid pointer. The string is
 * freed with `d2d_string_free`.
 */
enum D2dStatus d2d_scenario_run(const struct D2dScenario *s,
                                const struct D2dProfiles *p,
                                bool trace,
                                char **out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum D2dStatus d2d_airtime(uint32_t payload_bytes,
                           uint32_t overhead_bytes,
                           double data_rate_baud,
                           double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum D2dStatus d2d_coverage_area_km2(double radius_m, double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum D2dStatus d2d_lifetime_hours(double capacity_wh, double draw_w, double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum D2dStatus d2d_duty_cycle_lifetime(double draw_on_w,
                                       double draw_off_w,
                                       double capacity_wh,
                                       double fraction_d2d_on,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2DSIM_H */
