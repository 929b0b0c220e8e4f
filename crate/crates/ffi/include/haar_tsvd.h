#ifndef HAAR_TSVD_H
#define HAAR_TSVD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HtsvStatus {
  HTSV_STATUS_OK = 0,
  HTSV_STATUS_NULL_POINTER = 1,
  HTSV_STATUS_INVALID_ARGUMENT = 2,
  HTSV_STATUS_DIMS = 3,
  HTSV_STATUS_FORMAT = 4,
  HTSV_STATUS_NUMERIC = 5,
  HTSV_STATUS_IO = 6,
  HTSV_STATUS_PANIC = 7,
} HtsvStatus;

/**
 * Opaque denoiser configuration handle.
 */
typedef struct HtsvConfig HtsvConfig;

/**
 * Opaque image handle.
 */
typedef struct HtsvImage HtsvImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *htsv_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *htsv_last_error_message(void);

/**
 * Default configuration: `ps = 8`, `K = 32`, `W = 18`, σ estimated from the
 * image, non-adaptive. Release with [`htsv_config_free`].
 */
struct HtsvConfig *htsv_config_new(void);

/**
 * Parses a JSON configuration with the same fields as the CLI's config file.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HtsvStatus htsv_config_from_json(const char *json, struct HtsvConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. NULL is a no-op.
 */
void htsv_config_free(struct HtsvConfig *cfg);

/**
 * Uses a known noise level and disables the adaptive mode.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_sigma(struct HtsvConfig *cfg, double sigma);

/**
 * Enables (non-zero) or disables the per-subimage estimate and adjustment.
 * Enabling switches the noise source to the built-in estimator unless
 * external values were set.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_adaptive(struct HtsvConfig *cfg, int enabled);

/**
 * Per-subimage noise levels in row-major tile order; enables the adaptive
 * mode.
 *
 * # Safety
 * `values` must point to `len` doubles.
 */
enum HtsvStatus htsv_config_set_external_sigmas(struct HtsvConfig *cfg,
                                                const double *values,
                                                size_t len);

/**
 * Patch side `ps` (at least 2).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_patch_size(struct HtsvConfig *cfg, size_t value);

/**
 * Group size `K` (power of two).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_group_size(struct HtsvConfig *cfg, size_t value);

/**
 * Search radius `W`.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_window(struct HtsvConfig *cfg, size_t value);

/**
 * Reference stride.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_stride(struct HtsvConfig *cfg, size_t value);

/**
 * Worker threads, 0 for all cores.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_threads(struct HtsvConfig *cfg, size_t value);

/**
 * Seed of the adaptive vote.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HtsvStatus htsv_config_set_seed(struct HtsvConfig *cfg, uint64_t seed);

/**
 * Creates an `height×width×channels` image from row-major values with the
 * channel index fastest, or zeros when `data` is NULL. Three-channel images
 * default to the sRGB profile.
 *
 * # Safety
 * `data` must be NULL or point to `height·width·channels` doubles.
 */
enum HtsvStatus htsv_image_new(size_t height,
                               size_t width,
                               size_t channels,
                               const double *data,
                               struct HtsvImage **out);

/**
 * Marks the image as multiband (non-zero) or sRGB (zero).
 *
 * # Safety
 * `img` must be a live handle.
 */
enum HtsvStatus htsv_image_set_multiband(struct HtsvImage *img, int multiband);

/**
 * Loads a PNG, PGM/PPM or HTSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HtsvStatus htsv_image_load(const char *path, struct HtsvImage **out);

/**
 * Saves in the format implied by the extension.
 *
 * # Safety
 * `img` must be a live handle and `path` a NUL-terminated string.
 */
enum HtsvStatus htsv_image_save(const struct HtsvImage *img, const char *path);

/**
 * # Safety
 * `img` must be a live handle; any output pointer may be NULL.
 */
enum HtsvStatus htsv_image_dims(const struct HtsvImage *img,
                                size_t *height,
                                size_t *width,
                                size_t *channels);

/**
 * Copies the values into `out`, which must hold exactly
 * `height·width·channels` doubles.
 *
 * # Safety
 * `img` must be a live handle and `out` point to `len` writable doubles.
 */
enum HtsvStatus htsv_image_copy_data(const struct HtsvImage *img, double *out, size_t len);

/**
 * # Safety
 * `img` must come from this library and not be used afterwards. NULL is a no-op.
 */
void htsv_image_free(struct HtsvImage *img);

/**
 * Denoises `img` into a new image. `sigma_used` and `adjusted_fraction`
 * receive the mean noise level applied and the fraction of subimages whose
 * level was lowered; either may be NULL.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum HtsvStatus htsv_denoise(const struct HtsvImage *img,
                             const struct HtsvConfig *cfg,
                             struct HtsvImage **out,
                             double *sigma_used,
                             double *adjusted_fraction);

/**
 * Adds seeded Gaussian noise into a new image.
 *
 * # Safety
 * `img` must be a live handle and `out` a valid pointer.
 */
enum HtsvStatus htsv_add_awgn(const struct HtsvImage *img,
                              double sigma,
                              uint64_t seed,
                              struct HtsvImage **out);

/**
 * PSNR in dB with peak 255; identical images give `INFINITY`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum HtsvStatus htsv_psnr(const struct HtsvImage *a, const struct HtsvImage *b, double *out);

/**
 * Mean SSIM on the luma (or guide) plane.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum HtsvStatus htsv_ssim(const struct HtsvImage *a, const struct HtsvImage *b, double *out);

/**
 * Hard threshold `σ·√(2·ln(c·K·ps²))` used by the filter.
 */
double htsv_threshold_value(double sigma, size_t channels, size_t group_size, size_t patch_size);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAAR_TSVD_H */
