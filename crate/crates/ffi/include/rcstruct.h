#ifndef RCSTRUCT_H
#define RCSTRUCT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcsStatus {
  RCS_STATUS_OK = 0,
  RCS_STATUS_NULL_POINTER = 1,
  RCS_STATUS_INVALID_ARGUMENT = 2,
  RCS_STATUS_INVALID_CONFIG = 3,
  RCS_STATUS_NUMERICAL = 4,
  RCS_STATUS_INVALID_STATE = 5,
  RCS_STATUS_IO = 6,
  RCS_STATUS_BUFFER_TOO_SMALL = 7,
  RCS_STATUS_PANIC = 8,
} RcsStatus;

typedef enum RcsDetector {
  RCS_DETECTOR_RCSTRUCT = 0,
  RCS_DETECTOR_RCNET = 1,
  RCS_DETECTOR_LMMSE = 2,
} RcsDetector;

// Opaque simulation configuration.
typedef struct RcsConfig RcsConfig;

// Opaque sweep result; keeps the configuration it was produced with.
typedef struct RcsSweep RcsSweep;

// One (Eb/N0, detector) result.
typedef struct RcsRow {
  double ebn0_db;
  enum RcsDetector detector;
  double ber;
  double raw_ber;
  uint64_t bits;
  uint64_t errors;
  uint64_t subframes;
  double seconds;
} RcsRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into this library on the same thread.
const char *rcs_last_error(void);

// Library version as a static NUL-terminated string.
const char *rcs_version(void);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum RcsStatus rcs_config_from_json(const char *json, struct RcsConfig **out);

// Loads a JSON configuration file; a relative CQI table path resolves against its directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RcsStatus rcs_config_load(const char *path, struct RcsConfig **out);

// # Safety
// `cfg` must come from `rcs_config_from_json`/`rcs_config_load` or be NULL.
void rcs_config_free(struct RcsConfig *cfg);

// # Safety
// `cfg` must be a live configuration handle.
enum RcsStatus rcs_config_set_seed(struct RcsConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a live configuration handle.
enum RcsStatus rcs_config_set_subframes(struct RcsConfig *cfg, size_t subframes);

// When false, the seconds column is written as zero.
//
// # Safety
// `cfg` must be a live configuration handle.
enum RcsStatus rcs_config_set_timing(struct RcsConfig *cfg, bool timing);

// Replaces the Eb/N0 points (dB).
//
// # Safety
// `cfg` must be a live configuration handle; `ebn0_db` must hold `n` values.
enum RcsStatus rcs_config_set_ebn0(struct RcsConfig *cfg, const double *ebn0_db, size_t n);

// Enables the power amplifier at the given input back-off, or disables it when `enabled` is false.
//
// # Safety
// `cfg` must be a live configuration handle.
enum RcsStatus rcs_config_set_pa(struct RcsConfig *cfg, bool enabled, double ibo_db);

// Runs the full BER sweep described by `cfg`.
//
// # Safety
// `cfg` must be a live configuration handle; `out` must be writable.
enum RcsStatus rcs_run_sweep(const struct RcsConfig *cfg, struct RcsSweep **out);

// # Safety
// `sweep` must come from `rcs_run_sweep` or be NULL.
void rcs_sweep_free(struct RcsSweep *sweep);

// Number of rows, or 0 for NULL.
//
// # Safety
// `sweep` must be a live sweep handle or NULL.
size_t rcs_sweep_row_count(const struct RcsSweep *sweep);

// # Safety
// `sweep` must be a live sweep handle; `out` must be writable.
enum RcsStatus rcs_sweep_row(const struct RcsSweep *sweep, size_t index, struct RcsRow *out);

// Writes the CSV (preamble, header and rows) NUL-terminated into `buf`.
// `needed` receives the required size including the NUL; pass `buf = NULL`
// and `cap = 0` to query it. Returns `RCS_STATUS_BUFFER_TOO_SMALL` when `cap`
// is insufficient.
//
// # Safety
// `sweep` must be a live sweep handle; `buf` must hold `cap` bytes; `needed` must be writable.
enum RcsStatus rcs_sweep_csv(const struct RcsSweep *sweep, char *buf, size_t cap, size_t *needed);

// Rapp amplifier applied to one complex sample.
//
// # Safety
// `out_re` and `out_im` must be writable.
enum RcsStatus rcs_rapp_pa(double re,
                           double im,
                           double x_sat,
                           double rho,
                           double *out_re,
                           double *out_im);

// Exponential effective SINR of `n` linear SINRs.
//
// # Safety
// `sinrs` must hold `n` values; `out` must be writable.
enum RcsStatus rcs_eesm(const double *sinrs, size_t n, double beta, double *out);

// Bits-per-symbol weighted BER over `n` streams.
//
// # Safety
// `bers` and `bits_per_symbol` must hold `n` values; `out` must be writable.
enum RcsStatus rcs_raw_ber(const double *bers,
                           const uint32_t *bits_per_symbol,
                           size_t n,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RCSTRUCT_H */
