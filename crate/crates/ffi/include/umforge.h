#ifndef UMFORGE_H
#define UMFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum UmStatus {
  UM_STATUS_OK = 0,
  UM_STATUS_NULL_POINTER = 1,
  UM_STATUS_INVALID_ARGUMENT = 2,
  UM_STATUS_DIMENSION_MISMATCH = 3,
  UM_STATUS_INSUFFICIENT_DATA = 4,
  UM_STATUS_VALIDATION = 5,
  UM_STATUS_NUMERICAL = 6,
  UM_STATUS_FORMAT = 7,
  UM_STATUS_IO = 8,
  UM_STATUS_BUFFER_TOO_SMALL = 9,
  UM_STATUS_PANIC = 10,
} UmStatus;

// Grayscale image in 8-bit or HU space.
typedef struct UmImage UmImage;

// Unsupervised mask: quantized superpixel intensities.
typedef struct UmMask UmMask;

// Wilcoxon signed-rank result.
typedef struct UmWilcoxon {
  // Pairs left after dropping zero differences.
  size_t n;
  double w_plus;
  double w_minus;
  // P(W+ >= observed).
  double p_greater;
  // P(W+ <= observed).
  double p_less;
  double p_two_sided;
  // True for the exact null distribution, false for the normal approximation.
  bool exact;
} UmWilcoxon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *um_version(void);

// Message for the last failed call on this thread, or NULL if none failed yet.
// Valid until the next failing call on the same thread.
const char *um_last_error(void);

// Builds an 8-bit image from `width * height` row-major bytes.
//
// # Safety
// `pixels` must point to `width * height` readable bytes and `out` must be writable.
enum UmStatus um_image_from_u8(size_t width,
                               size_t height,
                               const uint8_t *pixels,
                               struct UmImage **out_image);

// Builds an HU image from `width * height` row-major values.
//
// # Safety
// `pixels` must point to `width * height` readable floats and `out` must be writable.
enum UmStatus um_image_from_hu(size_t width,
                               size_t height,
                               const float *pixels,
                               struct UmImage **out_image);

// Releases an image. NULL is ignored.
//
// # Safety
// `image` must come from this library and not be used afterwards.
void um_image_free(struct UmImage *image);

// Writes the image width and height.
//
// # Safety
// `image` must be a live handle; `width` and `height` must be writable.
enum UmStatus um_image_dims(const struct UmImage *image, size_t *width, size_t *height);

// Copies an 8-bit image into `buffer`, which must hold `width * height` bytes.
//
// # Safety
// `image` must be a live handle and `buffer` must hold `len` writable bytes.
enum UmStatus um_image_copy_u8(const struct UmImage *image, uint8_t *buffer, size_t len);

// Clips an HU image to `[lo, hi]` and rescales it to 8-bit.
//
// # Safety
// `image` must be a live handle and `out_image` writable.
enum UmStatus um_hu_window(const struct UmImage *image,
                           float lo,
                           float hi,
                           struct UmImage **out_image);

// Runs SLIC with `superpixels` requested superpixels, averages each, and quantizes
// to multiples of `threshold`. Pass 0 for `compactness` or `max_iters` to use the defaults.
//
// # Safety
// `image` must be a live 8-bit handle and `out_mask` writable.
enum UmStatus um_generate_unsupervised_mask(const struct UmImage *image,
                                            size_t superpixels,
                                            double compactness,
                                            size_t max_iters,
                                            uint32_t threshold,
                                            struct UmMask **out_mask);

// Wraps existing mask bytes, checking they are multiples of `threshold`.
//
// # Safety
// `values` must point to `width * height` readable bytes and `out_mask` must be writable.
enum UmStatus um_mask_from_u8(size_t width,
                              size_t height,
                              const uint8_t *values,
                              uint8_t threshold,
                              struct UmMask **out_mask);

// Releases a mask. NULL is ignored.
//
// # Safety
// `mask` must come from this library and not be used afterwards.
void um_mask_free(struct UmMask *mask);

// Writes the mask width, height and quantization threshold.
//
// # Safety
// `mask` must be a live handle; the out pointers must be writable.
enum UmStatus um_mask_info(const struct UmMask *mask,
                           size_t *width,
                           size_t *height,
                           uint8_t *threshold);

// Copies the mask values, row-major, into `buffer` of at least `width * height` bytes.
//
// # Safety
// `mask` must be a live handle and `buffer` must hold `len` writable bytes.
enum UmStatus um_mask_copy_values(const struct UmMask *mask, uint8_t *buffer, size_t len);

// Distinct supercluster values in ascending order. `count` always receives the
// number of values; at most `capacity` are copied.
//
// # Safety
// `mask` must be a live handle, `values` must hold `capacity` bytes, `count` writable.
enum UmStatus um_mask_superclusters(const struct UmMask *mask,
                                    uint8_t *values,
                                    size_t capacity,
                                    size_t *count);

// Paints an axis-aligned ellipse with `intensity` into a copy of `mask`.
// `footprint` receives the number of pixels written.
//
// # Safety
// `mask` must be a live handle; `out_mask` and `footprint` must be writable.
enum UmStatus um_mask_insert_ellipse(const struct UmMask *mask,
                                     double cx,
                                     double cy,
                                     double rx,
                                     double ry,
                                     uint8_t intensity,
                                     struct UmMask **out_mask,
                                     size_t *footprint);

// Fréchet distance between Gaussian fits of two row-major `n x dim` feature matrices.
//
// # Safety
// `a` and `b` must hold `n_a * dim` and `n_b * dim` floats; `distance` must be writable.
enum UmStatus um_frechet_distance(const float *a,
                                  size_t n_a,
                                  const float *b,
                                  size_t n_b,
                                  size_t dim,
                                  double *distance);

// Wilcoxon signed-rank test on `n` paired values, differences taken as `a - b`.
//
// # Safety
// `a` and `b` must hold `n` doubles and `result` must be writable.
enum UmStatus um_wilcoxon(const double *a, const double *b, size_t n, struct UmWilcoxon *result);

// Dice overlap of `label` between two `width x height` label maps. Two masks without
// the label score 1.
//
// # Safety
// `a` and `b` must hold `width * height` bytes and `score` must be writable.
enum UmStatus um_dice(const uint8_t *a,
                      const uint8_t *b,
                      size_t width,
                      size_t height,
                      uint8_t label,
                      double *score);

// KL(real || synth) in nats between HU histograms with `bin_width` bins over `[lo, hi)`.
//
// # Safety
// `real` and `synth` must hold `n_real` and `n_synth` doubles; `kl` must be writable.
enum UmStatus um_kl_hu_histogram(const double *real,
                                 size_t n_real,
                                 const double *synth,
                                 size_t n_synth,
                                 double bin_width,
                                 double lo,
                                 double hi,
                                 double *kl);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UMFORGE_H */
