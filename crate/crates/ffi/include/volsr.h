#ifndef VOLSR_H
#define VOLSR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum VolsrStatus {
  VOLSR_STATUS_OK = 0,
  VOLSR_STATUS_NULL_POINTER = 1,
  VOLSR_STATUS_INVALID_ARGUMENT = 2,
  VOLSR_STATUS_SHAPE = 3,
  VOLSR_STATUS_NOT_FOUND = 4,
  VOLSR_STATUS_IO = 5,
  VOLSR_STATUS_FORMAT = 6,
  VOLSR_STATUS_CHECKPOINT = 7,
  VOLSR_STATUS_CONFIG_MISMATCH = 8,
  VOLSR_STATUS_RUNTIME = 9,
  VOLSR_STATUS_PANIC = 10,
} VolsrStatus;

// Opaque handle to trained network parameters.
typedef struct VolsrModel VolsrModel;

// Opaque volume handle.
typedef struct VolsrVolume VolsrVolume;

// Scores of a prediction against ground truth. `psnr_db` is `+inf` for an
// exact match.
typedef struct VolsrMetrics {
  double psnr_db;
  double ssim;
  double ncc;
} VolsrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The string stays
// valid until the next failing call on the same thread.
const char *volsr_last_error(void);

// Forget the last error of this thread.
void volsr_clear_error(void);

// Library version, including the checkpoint format version. Static storage.
const char *volsr_version(void);

// Create a volume from `dims` (3 values), `spacing` (3 values, mm) and
// `len = nx*ny*nz` samples with x fastest. The data is copied.
//
// # Safety
// `dims` and `spacing` must point to 3 values, `data` to `len` floats and
// `out` to writable storage for one handle.
enum VolsrStatus volsr_volume_new(const size_t *dims,
                                  const double *spacing,
                                  const float *data,
                                  size_t len,
                                  struct VolsrVolume **out);

// Read a `.vvol` file.
//
// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum VolsrStatus volsr_volume_read(const char *path, struct VolsrVolume **out);

// Write `vol` as a `.vvol` file.
//
// # Safety
// `vol` must be a live handle and `path` a nul-terminated string.
enum VolsrStatus volsr_volume_write(const struct VolsrVolume *vol, const char *path);

// Copy the dimensions (3 values) into `out_dims`.
//
// # Safety
// `vol` must be a live handle and `out_dims` writable for 3 values.
enum VolsrStatus volsr_volume_dims(const struct VolsrVolume *vol, size_t *out_dims);

// Copy the voxel spacing (3 values, mm) into `out_spacing`.
//
// # Safety
// `vol` must be a live handle and `out_spacing` writable for 3 values.
enum VolsrStatus volsr_volume_spacing(const struct VolsrVolume *vol, double *out_spacing);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `vol` must be null or a live handle.
size_t volsr_volume_len(const struct VolsrVolume *vol);

// Borrow the samples, x fastest. Valid until the handle is freed; null for
// a null handle.
//
// # Safety
// `vol` must be null or a live handle.
const float *volsr_volume_data(const struct VolsrVolume *vol);

// Release a volume. Null is ignored.
//
// # Safety
// `vol` must be null or a handle not yet freed.
void volsr_volume_free(struct VolsrVolume *vol);

// Generate a phantom. `kind` is `nested-ellipsoids`, `line-gratings` or
// `mixed`; spacing is 1 mm.
//
// # Safety
// `kind` must be a nul-terminated string, `dims` point to 3 values and
// `out` be writable.
enum VolsrStatus volsr_phantom(const char *kind,
                               const size_t *dims,
                               uint64_t seed,
                               struct VolsrVolume **out);

// Blur, decimate in-plane by `factor` and add Rician noise of
// `noise_sigma`.
//
// # Safety
// `vol` must be a live handle and `out` writable.
enum VolsrStatus volsr_degrade(const struct VolsrVolume *vol,
                               size_t factor,
                               double noise_sigma,
                               uint64_t seed,
                               struct VolsrVolume **out);

// Upsample in-plane by `factor`. `method` is `none`, `linear`, `bspline` or
// `cnn`; `cnn` needs `model`, which is otherwise ignored and may be null.
//
// # Safety
// `vol` must be a live handle, `method` a nul-terminated string, `model`
// null or a live handle, and `out` writable.
enum VolsrStatus volsr_upsample(const struct VolsrVolume *vol,
                                const char *method,
                                size_t factor,
                                const struct VolsrModel *model,
                                struct VolsrVolume **out);

// Score `pred` against `truth`.
//
// # Safety
// Both handles must be live and `out` writable.
enum VolsrStatus volsr_metrics(const struct VolsrVolume *pred,
                               const struct VolsrVolume *truth,
                               struct VolsrMetrics *out);

// Load network parameters from a checkpoint file.
//
// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum VolsrStatus volsr_model_load(const char *path, struct VolsrModel **out);

// Upsampling factor of a model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t volsr_model_factor(const struct VolsrModel *model);

// Release a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void volsr_model_free(struct VolsrModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLSR_H */
