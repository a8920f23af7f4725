#ifndef WIOPTND_H
#define WIOPTND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call. Codes 2 to 5 match the CLI exit codes.
typedef enum WioptndStatus {
  WIOPTND_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or an index out of range.
  WIOPTND_STATUS_INVALID_ARGUMENT = 1,
  // Unparseable or invalid configuration, or malformed input data.
  WIOPTND_STATUS_CONFIG = 2,
  // Physically infeasible parameters or an out-of-domain value.
  WIOPTND_STATUS_DOMAIN = 3,
  WIOPTND_STATUS_IO = 4,
  // Protocol, bank and raster do not fit together.
  WIOPTND_STATUS_MISMATCH = 5,
  // A trace disagrees with its own summary.
  WIOPTND_STATUS_TRACE = 6,
  // Internal failure; the library state is unspecified.
  WIOPTND_STATUS_PANIC = 7,
} WioptndStatus;

// Per-frequency discharge delays.
typedef struct WioptndBank WioptndBank;

// Parsed configuration.
typedef struct WioptndConfig WioptndConfig;

// Binary spike matrix, devices by slots.
typedef struct WioptndRaster WioptndRaster;

// Slot-by-slot record of one simulation.
typedef struct WioptndTrace WioptndTrace;

// Counts and ratios of one trace. Ratios are NaN when the raster holds
// no spikes.
typedef struct WioptndMetrics {
  size_t total_spikes;
  size_t n_covered;
  size_t n_mis;
  size_t n_spurious;
  size_t n_emissions;
  double gamma_mis;
  double eta_stim_pct;
  double gamma_stim;
} WioptndMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on this thread.
const char *wioptnd_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void wioptnd_string_free(char *s);

// Library version, static storage.
const char *wioptnd_version(void);

// Default configuration.
//
// # Safety
// `out` must be writable.
enum WioptndStatus wioptnd_config_new(struct WioptndConfig **out);

// Configuration from `key = value` text. Unset keys keep their defaults.
//
// # Safety
// `text` must be a nul-terminated string and `out` writable.
enum WioptndStatus wioptnd_config_parse(const char *text, struct WioptndConfig **out);

// Override one key. On failure the configuration is unchanged.
//
// # Safety
// `cfg` must be a live handle; `key` and `value` nul-terminated strings.
enum WioptndStatus wioptnd_config_set(struct WioptndConfig *cfg,
                                      const char *key,
                                      const char *value);

// Fully resolved configuration as `key = value` text.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_config_to_text(const struct WioptndConfig *cfg, char **out);

// # Safety
// `cfg` must be null or a handle not yet freed.
void wioptnd_config_free(struct WioptndConfig *cfg);

// Ultrasound intensity reaching the harvester, mW/cm².
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_intensity_at_depth(const struct WioptndConfig *cfg, double *out);

// Electrical power delivered by the harvester, W.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_harvested_power(const struct WioptndConfig *cfg, double *out);

// Tissue transmittance at `d_mm` for the given coefficients (mm⁻¹).
//
// # Safety
// `out` must be writable.
enum WioptndStatus wioptnd_transmittance(double mu_a,
                                         double mu_s_prime,
                                         double g_const,
                                         double d_mm,
                                         double *out);

// Empty raster.
//
// # Safety
// `out` must be writable.
enum WioptndStatus wioptnd_raster_new(size_t devices,
                                      size_t slots,
                                      double slot_ms,
                                      struct WioptndRaster **out);

// Raster drawn from the configured spike source and seed.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_raster_generate(const struct WioptndConfig *cfg,
                                           struct WioptndRaster **out);

// # Safety
// `raster` must be a live handle.
enum WioptndStatus wioptnd_raster_set(struct WioptndRaster *raster,
                                      size_t device,
                                      size_t slot,
                                      bool spike);

// Whether `device` spikes in `slot`; false when out of range.
//
// # Safety
// `raster` must be a live handle.
bool wioptnd_raster_get(const struct WioptndRaster *raster, size_t device, size_t slot);

// # Safety
// `raster` must be null or a live handle.
size_t wioptnd_raster_devices(const struct WioptndRaster *raster);

// # Safety
// `raster` must be null or a live handle.
size_t wioptnd_raster_slots(const struct WioptndRaster *raster);

// # Safety
// `raster` must be null or a live handle.
size_t wioptnd_raster_total_spikes(const struct WioptndRaster *raster);

// # Safety
// `raster` must be null or a handle not yet freed.
void wioptnd_raster_free(struct WioptndRaster *raster);

// Pattern bank for the configured protocol. Writes null for
// Charge-and-Fire, which uses no bank.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_bank_build(const struct WioptndConfig *cfg, struct WioptndBank **out);

// Custom bank from a row-major `n_patterns` by `devices` delay matrix.
//
// # Safety
// `delays` must point to `n_patterns * devices` values and `out` be writable.
enum WioptndStatus wioptnd_bank_from_rows(size_t window,
                                          size_t n_patterns,
                                          size_t devices,
                                          const size_t *delays,
                                          struct WioptndBank **out);

// Bank from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string and `out` writable.
enum WioptndStatus wioptnd_bank_from_json(const char *json, struct WioptndBank **out);

// # Safety
// `bank` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_bank_to_json(const struct WioptndBank *bank, char **out);

// Number of patterns.
//
// # Safety
// `bank` must be null or a live handle.
size_t wioptnd_bank_len(const struct WioptndBank *bank);

// # Safety
// `bank` must be null or a handle not yet freed.
void wioptnd_bank_free(struct WioptndBank *bank);

// Simulate `raster` under the configured protocol. `bank` may be null for
// Charge-and-Fire and must be non-null for the window protocols.
//
// # Safety
// `cfg` and `raster` must be live handles, `bank` null or live, `out` writable.
enum WioptndStatus wioptnd_run(const struct WioptndConfig *cfg,
                               const struct WioptndRaster *raster,
                               const struct WioptndBank *bank,
                               struct WioptndTrace **out);

// # Safety
// `trace` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_trace_metrics(const struct WioptndTrace *trace,
                                         struct WioptndMetrics *out);

// # Safety
// `trace` must be null or a live handle.
size_t wioptnd_trace_slots(const struct WioptndTrace *trace);

// Frequency index emitted in `slot`, or -1 when idle or out of range.
//
// # Safety
// `trace` must be null or a live handle.
int64_t wioptnd_trace_emitted(const struct WioptndTrace *trace, size_t slot);

// Per-slot event log, one JSON object per line.
//
// # Safety
// `trace` must be a live handle and `out` writable.
enum WioptndStatus wioptnd_trace_to_jsonl(const struct WioptndTrace *trace, char **out);

// Recount the event log and compare it with the stored totals.
//
// # Safety
// `trace` must be a live handle.
enum WioptndStatus wioptnd_trace_replay(const struct WioptndTrace *trace);

// # Safety
// `trace` must be null or a handle not yet freed.
void wioptnd_trace_free(struct WioptndTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIOPTND_H */
