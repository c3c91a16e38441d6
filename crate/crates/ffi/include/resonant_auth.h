#ifndef RESONANT_AUTH_H
#define RESONANT_AUTH_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Verdicts are reported in [`RaReport`], not here.
 */
typedef enum RaStatus {
  RA_STATUS_OK = 0,
  RA_STATUS_NULL_POINTER = 1,
  RA_STATUS_INVALID_UTF8 = 2,
  RA_STATUS_IO = 3,
  RA_STATUS_FORMAT = 4,
  RA_STATUS_UNSUPPORTED = 5,
  RA_STATUS_EMPTY = 6,
  RA_STATUS_NO_ONSET = 7,
  RA_STATUS_SILENT_SEGMENT = 8,
  RA_STATUS_ARGUMENT = 9,
  RA_STATUS_SHAPE = 10,
  RA_STATUS_COMPATIBILITY = 11,
  RA_STATUS_CONFIG = 12,
  RA_STATUS_MANIFEST = 13,
  RA_STATUS_STATE = 14,
  RA_STATUS_PANIC = 15,
} RaStatus;

/**
 * A trained model bundle.
 */
typedef struct RaBundle RaBundle;

/**
 * Result of verifying one recording.
 */
typedef struct RaReport {
  double distance;
  double threshold;
  bool authentic;
  /**
   * Index into the bundle's label table, or -1 when counterfeit.
   */
  int32_t label_index;
  /**
   * Classifier probability of `label_index`; NaN when counterfeit.
   */
  double confidence;
  uint32_t original_peak_count;
  uint32_t reconstructed_peak_count;
} RaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *ra_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ra_version(void);

/**
 * Loads a bundle file. On success `*out` owns a new handle.
 */
enum RaStatus ra_bundle_load(const char *path, struct RaBundle **out);

/**
 * Releases a bundle. NULL is ignored.
 */
void ra_bundle_free(struct RaBundle *bundle);

/**
 * Number of coin classes the bundle recognizes; 0 for NULL.
 */
size_t ra_bundle_label_count(const struct RaBundle *bundle);

/**
 * Class name at `index`, owned by the bundle; NULL if out of range.
 */
const char *ra_bundle_label(const struct RaBundle *bundle, size_t index);

/**
 * Decision threshold on the peak distance; NaN for NULL.
 */
double ra_bundle_threshold(const struct RaBundle *bundle);

/**
 * Spectrum width the bundle was trained with (8820 = reference pipeline).
 */
size_t ra_bundle_spectrum_width(const struct RaBundle *bundle);

/**
 * Verifies a mono or stereo PCM / float WAV file.
 */
enum RaStatus ra_verify_wav(const struct RaBundle *bundle, const char *path, struct RaReport *out);

/**
 * Verifies `len` mono samples in [-1, 1] at `sample_rate` Hz.
 */
enum RaStatus ra_verify_samples(const struct RaBundle *bundle,
                                const double *samples,
                                size_t len,
                                uint32_t sample_rate,
                                struct RaReport *out);

/**
 * Verifies a WAV file and returns the one-line JSON report in `*out`;
 * release it with [`ra_string_free`].
 */
enum RaStatus ra_verify_wav_json(const struct RaBundle *bundle, const char *path, char **out);

/**
 * Frees a string returned by this library. NULL is ignored.
 */
void ra_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESONANT_AUTH_H */
