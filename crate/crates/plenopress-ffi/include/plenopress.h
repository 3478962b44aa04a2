#ifndef PLENOPRESS_H
#define PLENOPRESS_H

/* Generated by cbindgen from plenopress-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum PpStatus {
  // Success.
  PP_STATUS_OK = 0,
  // A pointer or argument was null, malformed, or out of range.
  PP_STATUS_INVALID_ARGUMENT = 1,
  // Input data violated a contract (bad spec, bad stream, bad image).
  PP_STATUS_DATA = 2,
  // Filesystem or image I/O failed.
  PP_STATUS_IO = 3,
  // Internal failure (panic); report as a bug.
  PP_STATUS_INTERNAL = 4,
} PpStatus;

// Opaque camera geometry handle.
typedef struct PpCameraSpec PpCameraSpec;

// Opaque codec model handle.
typedef struct PpModel PpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *pp_last_error_message(void);

// Library version string (static storage).
const char *pp_version(void);

// Load a camera spec from a key-value config file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be valid.
enum PpStatus pp_spec_load(const char *path, struct PpCameraSpec **out);

// The canonical TSPC camera geometry.
//
// # Safety
// `out` must be a valid pointer.
enum PpStatus pp_spec_canonical(struct PpCameraSpec **out);

// # Safety
// `spec` must come from a `pp_spec_*` constructor and not be freed twice.
void pp_spec_free(struct PpCameraSpec *spec);

// Sensor dimensions of a spec.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_spec_sensor_size(const struct PpCameraSpec *spec,
                                  uint32_t *width,
                                  uint32_t *height);

// Minimum lossless cutting size sqrt(2) * m * radius.
//
// # Safety
// `out` must be a valid pointer.
enum PpStatus pp_min_crop_size(double m, double radius, double *out);

// Bits-per-pixel against the spec's sensor resolution.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_bpp(uint64_t bit_count, const struct PpCameraSpec *spec, double *out);

// Crop-align a raw plenoptic image file into the preprocessed layout
// (image plus `.meta` sidecar).
//
// # Safety
// All pointers must be valid NUL-terminated strings / handles.
enum PpStatus pp_preprocess_file(const struct PpCameraSpec *spec,
                                 const char *input,
                                 uint32_t d,
                                 const char *output);

// Render a synthetic raw plenoptic image to a file.
// `scene` is one of "constant", "gradient", "textured".
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_synth_file(const struct PpCameraSpec *spec,
                            const char *scene,
                            uint64_t seed,
                            double parallax,
                            const char *output);

// Build deterministic seeded model parameters.
//
// # Safety
// `out` must be a valid pointer.
enum PpStatus pp_model_init(uint32_t n,
                            uint32_t m,
                            uint32_t heads,
                            uint64_t seed,
                            struct PpModel **out);

// Load model parameters from a file.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_model_load(const char *path, struct PpModel **out);

// # Safety
// `model` must come from a `pp_model_*` constructor and not be freed twice.
void pp_model_free(struct PpModel *model);

// Encode a preprocessed image file (with `.meta` sidecar) into a
// bitstream file.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_encode_file(const struct PpModel *model,
                             const char *pre_image,
                             uint8_t lambda_index,
                             uint32_t patch_size,
                             const char *out_bitstream);

// Decode a bitstream file back to a preprocessed-layout image file.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_decode_file(const struct PpModel *model,
                             const char *bitstream,
                             const char *out_image);

// PSNR between two image files, +inf for identical images.
//
// # Safety
// All pointers must be valid.
enum PpStatus pp_psnr_files(const char *a, const char *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLENOPRESS_H */
