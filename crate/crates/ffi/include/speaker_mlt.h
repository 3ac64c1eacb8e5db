#ifndef SPEAKER_MLT_H
#define SPEAKER_MLT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmltStatus {
  SMLT_STATUS_OK = 0,
  SMLT_STATUS_NULL_POINTER = 1,
  SMLT_STATUS_INVALID_ARGUMENT = 2,
  SMLT_STATUS_IO = 3,
  SMLT_STATUS_DATA = 4,
  SMLT_STATUS_MODEL = 5,
  SMLT_STATUS_BUFFER_TOO_SMALL = 6,
  SMLT_STATUS_PANIC = 7,
} SmltStatus;

/**
 * Compressed spectrogram, `bins x frames`, bin-major `f32`.
 */
typedef struct SmltFeatures SmltFeatures;

/**
 * Speaker count and subgroup count of a multi-label scheme.
 */
typedef struct SmltLabelScheme SmltLabelScheme;

/**
 * Speaker-ID network restored from a checkpoint.
 */
typedef struct SmltSpeakerId SmltSpeakerId;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t smlt_last_error(char *buf, size_t len);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum SmltStatus smlt_label_scheme_new(size_t speakers,
                                      size_t subgroups,
                                      struct SmltLabelScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle from [`smlt_label_scheme_new`] not yet freed.
 */
void smlt_label_scheme_free(struct SmltLabelScheme *scheme);

/**
 * Number of expanded labels, or 0 for a null handle.
 *
 * # Safety
 * `scheme` must be null or a live handle.
 */
size_t smlt_label_scheme_num_labels(const struct SmltLabelScheme *scheme);

/**
 * # Safety
 * `scheme` must be a live handle and `out` valid.
 */
enum SmltStatus smlt_expand_label(const struct SmltLabelScheme *scheme,
                                  size_t speaker,
                                  size_t subgroup,
                                  size_t *out);

/**
 * # Safety
 * `scheme` must be a live handle and `out` valid.
 */
enum SmltStatus smlt_base_speaker(const struct SmltLabelScheme *scheme, size_t label, size_t *out);

/**
 * Writes 1 to `out` when `predicted` is one of `speaker`'s aliases, else 0.
 *
 * # Safety
 * `scheme` must be a live handle and `out` valid.
 */
enum SmltStatus smlt_is_correct(const struct SmltLabelScheme *scheme,
                                size_t predicted,
                                size_t speaker,
                                int32_t *out);

/**
 * Scores `n` predictions against their true speakers under the alias rule.
 *
 * # Safety
 * `predicted` and `speakers` must point to `n` values; the outputs must be valid.
 */
enum SmltStatus smlt_evaluate(const struct SmltLabelScheme *scheme,
                              const size_t *predicted,
                              const size_t *speakers,
                              size_t n,
                              uint64_t *out_correct,
                              uint64_t *out_total);

/**
 * Compressed, center-cropped features of a 16 kHz mono 16-bit WAV file with
 * the default frame settings.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum SmltStatus smlt_features_from_wav(const char *path, struct SmltFeatures **out);

/**
 * Same as [`smlt_features_from_wav`] for samples already in memory.
 *
 * # Safety
 * `samples` must point to `n` values and `out` be valid.
 */
enum SmltStatus smlt_features_from_samples(const float *samples,
                                           size_t n,
                                           uint32_t sample_rate,
                                           struct SmltFeatures **out);

/**
 * # Safety
 * `features` must be a live handle; the outputs must be valid.
 */
enum SmltStatus smlt_features_shape(const struct SmltFeatures *features,
                                    size_t *bins,
                                    size_t *frames);

/**
 * Pointer to `bins * frames` bin-major values, valid until the handle is freed.
 *
 * # Safety
 * `features` must be null or a live handle.
 */
const float *smlt_features_data(const struct SmltFeatures *features);

/**
 * # Safety
 * `features` must be null or a live handle.
 */
void smlt_features_free(struct SmltFeatures *features);

/**
 * Loads a speaker-ID checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum SmltStatus smlt_speaker_id_load(const char *path, struct SmltSpeakerId **out);

/**
 * # Safety
 * `net` must be null or a live handle.
 */
void smlt_speaker_id_free(struct SmltSpeakerId *net);

/**
 * Size of the logit vector, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t smlt_speaker_id_output_dim(const struct SmltSpeakerId *net);

/**
 * Size of the embedding vector, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t smlt_speaker_id_embedding_dim(const struct SmltSpeakerId *net);

/**
 * Writes the logits for `features` into `out` (capacity `len`). `written`
 * (optional) receives the number of values required.
 *
 * # Safety
 * Handles must be live; `out` must hold `len` values.
 */
enum SmltStatus smlt_speaker_id_logits(const struct SmltSpeakerId *net,
                                       const struct SmltFeatures *features,
                                       float *out,
                                       size_t len,
                                       size_t *written);

/**
 * Writes the speaker embedding for `features` into `out`.
 *
 * # Safety
 * Handles must be live; `out` must hold `len` values.
 */
enum SmltStatus smlt_speaker_id_embedding(const struct SmltSpeakerId *net,
                                          const struct SmltFeatures *features,
                                          float *out,
                                          size_t len,
                                          size_t *written);

/**
 * Mixes `noise` into `clean` at `snr_db` and writes `n_clean` samples to
 * `out`. The noise start offset is drawn from `seed` and wraps around.
 *
 * # Safety
 * `clean` and `out` must hold `n_clean` values, `noise` `n_noise` values.
 */
enum SmltStatus smlt_mix_at_snr(const float *clean,
                                size_t n_clean,
                                const float *noise,
                                size_t n_noise,
                                uint32_t sample_rate,
                                double snr_db,
                                uint64_t seed,
                                float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPEAKER_MLT_H */
