#ifndef PATHX_H
#define PATHX_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum PathxStatus {
  PATHX_STATUS_OK = 0,
  PATHX_STATUS_INVALID_ARGUMENT = 1,
  PATHX_STATUS_INPUT_FORMAT = 2,
  PATHX_STATUS_NUMERICAL = 3,
  PATHX_STATUS_NULL_POINTER = 4,
  PATHX_STATUS_BUFFER_TOO_SMALL = 5,
  PATHX_STATUS_PANIC = 6,
} PathxStatus;

// Opaque trained autoencoder with its input scaler.
typedef struct PathxAutoencoder PathxAutoencoder;

// Opaque ViT encoder.
typedef struct PathxVit PathxVit;

typedef struct PathxScoringConfig {
  double dark_threshold;
  size_t min_area;
  uint8_t brightness_threshold;
  double blank_weight;
} PathxScoringConfig;

typedef struct PathxTileScore {
  size_t num_nuclei;
  double clarity;
  double blank_fraction;
  double blank_space;
  double score;
} PathxTileScore;

typedef struct PathxLogRank {
  double observed_a;
  double observed_b;
  double expected_a;
  double expected_b;
  double variance;
  double statistic;
  double p_value;
  // Nonzero when the variance is zero.
  uint8_t degenerate;
} PathxLogRank;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pathx_version(void);

// Message for the last failed call on this thread, or null after a
// success. Valid until the next pathx call on the same thread.
const char *pathx_last_error_message(void);

struct PathxScoringConfig pathx_scoring_config_default(void);

// Scores a row-major interleaved RGB tile. A null `config` uses defaults.
//
// # Safety
// `pixels` must point to `width * height * 3` bytes; `config` must be
// null or valid; `out` must be writable.
enum PathxStatus pathx_score_tile_rgb(const uint8_t *pixels,
                                      size_t width,
                                      size_t height,
                                      const struct PathxScoringConfig *config,
                                      struct PathxTileScore *out);

// Loads encoder weights from a tensor file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PathxStatus pathx_vit_load(const char *path, struct PathxVit **out);

// # Safety
// `vit` must be null or a handle from [`pathx_vit_load`] not yet freed.
void pathx_vit_free(struct PathxVit *vit);

// Required square input side, or 0 for a null handle.
//
// # Safety
// `vit` must be null or a live handle.
size_t pathx_vit_image_size(const struct PathxVit *vit);

// Feature width, or 0 for a null handle.
//
// # Safety
// `vit` must be null or a live handle.
size_t pathx_vit_feature_dim(const struct PathxVit *vit);

// Encodes one `image_size × image_size` RGB tile into `out`.
//
// # Safety
// `vit` must be a live handle; `pixels` must hold `width * height * 3`
// bytes; `out` must hold `out_len` doubles.
enum PathxStatus pathx_vit_encode_rgb(const struct PathxVit *vit,
                                      const uint8_t *pixels,
                                      size_t width,
                                      size_t height,
                                      double *out,
                                      size_t out_len);

// Loads a trained autoencoder from a tensor file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PathxStatus pathx_ae_load(const char *path, struct PathxAutoencoder **out);

// # Safety
// `ae` must be null or a handle from [`pathx_ae_load`] not yet freed.
void pathx_ae_free(struct PathxAutoencoder *ae);

// Raw feature width, or 0 for a null handle.
//
// # Safety
// `ae` must be null or a live handle.
size_t pathx_ae_input_dim(const struct PathxAutoencoder *ae);

// Latent width, or 0 for a null handle.
//
// # Safety
// `ae` must be null or a live handle.
size_t pathx_ae_latent_dim(const struct PathxAutoencoder *ae);

// Scales and encodes one raw feature vector into `out`.
//
// # Safety
// `ae` must be a live handle; `features` must hold `len` doubles; `out`
// must hold `out_len` doubles.
enum PathxStatus pathx_ae_encode(const struct PathxAutoencoder *ae,
                                 const double *features,
                                 size_t len,
                                 double *out,
                                 size_t out_len);

// Two-group log-rank test. `events[i]` is nonzero for an observed death.
//
// # Safety
// Each times/events pair must hold its group's count; `out` must be
// writable.
enum PathxStatus pathx_logrank(const double *times_a,
                               const uint8_t *events_a,
                               size_t n_a,
                               const double *times_b,
                               const uint8_t *events_b,
                               size_t n_b,
                               struct PathxLogRank *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHX_H */
