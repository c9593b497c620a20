#ifndef EMSPLAT_H
#define EMSPLAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmsStatus {
  EMS_STATUS_OK = 0,
  EMS_STATUS_NULL_POINTER = 1,
  EMS_STATUS_INVALID_ARGUMENT = 2,
  EMS_STATUS_SHAPE_MISMATCH = 3,
  EMS_STATUS_DEGENERATE = 4,
  EMS_STATUS_FORMAT = 5,
  EMS_STATUS_IO = 6,
  EMS_STATUS_DIVERGENCE = 7,
  EMS_STATUS_PANIC = 8,
} EmsStatus;

typedef enum EmsMode {
  EMS_MODE_ANISOTROPIC = 0,
  EMS_MODE_ISOTROPIC = 1,
} EmsMode;

// Opaque Gaussian mixture.
typedef struct EmsMixture EmsMixture;

// Microscope parameters. Defocus in Å, angle and phase shift in radians,
// voltage in kV, Cs in mm, B-factor in Å².
typedef struct EmsCtf {
  double defocus_u;
  double defocus_v;
  double astigmatism_angle;
  double voltage;
  double spherical_aberration;
  double amplitude_contrast;
  double phase_shift;
  double b_factor;
} EmsCtf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Number of raw parameters per Gaussian.
uintptr_t ems_params_per_gaussian(void);

// Copies the last error message of this thread, NUL-terminated and
// truncated to `cap` bytes. Returns the full message length.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
uintptr_t ems_last_error(char *buf, uintptr_t cap);

// Random initialization for an image grid of `size` pixels over `[-extent, extent)`.
//
// # Safety
// `out` must point to writable storage for one handle.
enum EmsStatus ems_mixture_init_random(uintptr_t n,
                                       uint64_t seed,
                                       uintptr_t size,
                                       double extent,
                                       enum EmsMode mode,
                                       struct EmsMixture **out);

// Builds a mixture from `len` raw values, 11 per Gaussian.
//
// # Safety
// `params` must point to `len` readable doubles; `out` to one writable handle.
enum EmsStatus ems_mixture_from_params(enum EmsMode mode,
                                       const double *params,
                                       uintptr_t len,
                                       struct EmsMixture **out);

// # Safety
// `m` must be null or a handle from this library that has not been freed.
void ems_mixture_free(struct EmsMixture *m);

// Number of Gaussians, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
uintptr_t ems_mixture_count(const struct EmsMixture *m);

// # Safety
// `m` must be a live handle and `out` writable.
enum EmsStatus ems_mixture_mode(const struct EmsMixture *m, enum EmsMode *out);

// Copies the raw parameters into `out`, which must hold exactly `11 * count` values.
//
// # Safety
// `m` must be a live handle and `out` point to `len` writable doubles.
enum EmsStatus ems_mixture_params(const struct EmsMixture *m, double *out, uintptr_t len);

// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` one writable handle.
enum EmsStatus ems_checkpoint_read(const char *path_, struct EmsMixture **out);

// # Safety
// `m` must be a live handle and `path` a NUL-terminated UTF-8 string.
enum EmsStatus ems_checkpoint_write(const struct EmsMixture *m, const char *path_);

// Projects the mixture under the rotation of quaternion `q` (w, x, y, z)
// and in-plane shift `shift` (world units) onto a `size²` image.
//
// # Safety
// `q` must point to 4 doubles, `shift` to 2, `out` to `len` writable doubles.
enum EmsStatus ems_rasterize(const struct EmsMixture *m,
                             const double *q,
                             const double *shift,
                             uintptr_t size,
                             double extent,
                             double *out,
                             uintptr_t len);

// Filters a `size²` image with the CTF. `input` and `out` may alias.
//
// # Safety
// `input` and `out` must each point to `size * size` doubles; `ctf` to one struct.
enum EmsStatus ems_apply_ctf(const double *input,
                             double *out,
                             uintptr_t size,
                             double pixel_size,
                             const struct EmsCtf *ctf);

// Samples the mixture density on a `size³` grid over `[-extent, extent)³`.
//
// # Safety
// `m` must be a live handle and `out` point to `len` writable doubles.
enum EmsStatus ems_voxelize(const struct EmsMixture *m,
                            uintptr_t size,
                            double extent,
                            double *out,
                            uintptr_t len);

// Fourier shell correlation of two `size³` volumes. Writes shells
// `1..=size/2` into `corr` (length `size / 2`) and the resolution in Å at
// the 0.143 threshold into `res_0143`, which is NaN when the curve never
// drops below it.
//
// # Safety
// `a` and `b` must point to `size³` doubles, `corr` to `corr_len` writable
// doubles and `res_0143` to one.
enum EmsStatus ems_fsc(const double *a,
                       const double *b,
                       uintptr_t size,
                       double pixel_size,
                       double *corr,
                       uintptr_t corr_len,
                       double *res_0143);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMSPLAT_H */
