//! C interface to `emsplat`.
//!
//! Mixtures cross the boundary as opaque `EmsMixture` handles. Images and
//! volumes are caller-owned `double` buffers in row-major order (x fastest).
//! Every fallible call returns an `EmsStatus`; on failure the message is
//! available from `ems_last_error` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use emsplat::eval::{fsc, voxelize, VoxelVolume};
use emsplat::gmm::{init_random, PARAMS_PER_GAUSSIAN};
use emsplat::io::{read_checkpoint, write_checkpoint};
use emsplat::optics::apply_ctf;
use emsplat::splat::rasterize;
use emsplat::{CtfParams, Error, GaussianMixture, GridSpec, Mode, Pose, RenderedImage};
use nalgebra::Vector2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Degenerate = 4,
    Format = 5,
    Io = 6,
    Divergence = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmsMode {
    Anisotropic = 0,
    Isotropic = 1,
}

/// Microscope parameters. Defocus in Å, angle and phase shift in radians,
/// voltage in kV, Cs in mm, B-factor in Å².
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EmsCtf {
    pub defocus_u: f64,
    pub defocus_v: f64,
    pub astigmatism_angle: f64,
    pub voltage: f64,
    pub spherical_aberration: f64,
    pub amplitude_contrast: f64,
    pub phase_shift: f64,
    pub b_factor: f64,
}

impl From<EmsCtf> for CtfParams {
    fn from(c: EmsCtf) -> Self {
        CtfParams {
            defocus_u: c.defocus_u,
            defocus_v: c.defocus_v,
            astigmatism_angle: c.astigmatism_angle,
            voltage: c.voltage,
            spherical_aberration: c.spherical_aberration,
            amplitude_contrast: c.amplitude_contrast,
            phase_shift: c.phase_shift,
            b_factor: c.b_factor,
        }
    }
}

/// Opaque Gaussian mixture.
pub struct EmsMixture {
    inner: GaussianMixture,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> EmsStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidCount(_) | Error::Config(_) | Error::UnknownPhantom(_) => {
            EmsStatus::InvalidArgument
        }
        Error::ShapeMismatch { .. } => EmsStatus::ShapeMismatch,
        Error::DegenerateRotation | Error::DegenerateSplat => EmsStatus::Degenerate,
        Error::Format(_) | Error::UnsupportedMrcMode(_) => EmsStatus::Format,
        Error::Io(_) => EmsStatus::Io,
        Error::Divergence { .. } => EmsStatus::Divergence,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EmsStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            EmsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            EmsStatus::Panic
        }
    }
}

unsafe fn mixture<'a>(m: *const EmsMixture) -> Result<&'a GaussianMixture, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or(Fail::Null("mixture"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn check_len(expected: usize, found: usize) -> Result<(), Fail> {
    if expected != found {
        return Err(Fail::Lib(Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }));
    }
    Ok(())
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("output"));
    }
    *out = v;
    Ok(())
}

fn boxed(m: GaussianMixture) -> *mut EmsMixture {
    Box::into_raw(Box::new(EmsMixture { inner: m }))
}

fn mode_of(m: EmsMode) -> Mode {
    match m {
        EmsMode::Anisotropic => Mode::Anisotropic,
        EmsMode::Isotropic => Mode::Isotropic,
    }
}

/// Number of raw parameters per Gaussian.
#[no_mangle]
pub extern "C" fn ems_params_per_gaussian() -> usize {
    PARAMS_PER_GAUSSIAN
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ems_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Random initialization for an image grid of `size` pixels over `[-extent, extent)`.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_init_random(
    n: usize,
    seed: u64,
    size: usize,
    extent: f64,
    mode: EmsMode,
    out: *mut *mut EmsMixture,
) -> EmsStatus {
    guard(|| {
        let grid = GridSpec::new(size, extent, 1.0)?;
        let m = init_random(n, seed, &grid, mode_of(mode))?;
        put(out, boxed(m))
    })
}

/// Builds a mixture from `len` raw values, 11 per Gaussian.
///
/// # Safety
/// `params` must point to `len` readable doubles; `out` to one writable handle.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_from_params(
    mode: EmsMode,
    params: *const f64,
    len: usize,
    out: *mut *mut EmsMixture,
) -> EmsStatus {
    guard(|| {
        let m = GaussianMixture::from_flat(mode_of(mode), slice(params, len, "params")?)?;
        put(out, boxed(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_free(m: *mut EmsMixture) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of Gaussians, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_count(m: *const EmsMixture) -> usize {
    m.as_ref().map_or(0, |m| m.inner.count())
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_mode(m: *const EmsMixture, out: *mut EmsMode) -> EmsStatus {
    guard(|| {
        let mode = match mixture(m)?.mode() {
            Mode::Anisotropic => EmsMode::Anisotropic,
            Mode::Isotropic => EmsMode::Isotropic,
        };
        put(out, mode)
    })
}

/// Copies the raw parameters into `out`, which must hold exactly `11 * count` values.
///
/// # Safety
/// `m` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ems_mixture_params(m: *const EmsMixture, out: *mut f64, len: usize) -> EmsStatus {
    guard(|| {
        let m = mixture(m)?;
        check_len(m.param_count(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(&m.to_flat());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` one writable handle.
#[no_mangle]
pub unsafe extern "C" fn ems_checkpoint_read(path_: *const c_char, out: *mut *mut EmsMixture) -> EmsStatus {
    guard(|| {
        let m = read_checkpoint(&path(path_)?)?;
        put(out, boxed(m))
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ems_checkpoint_write(m: *const EmsMixture, path_: *const c_char) -> EmsStatus {
    guard(|| {
        write_checkpoint(&path(path_)?, mixture(m)?)?;
        Ok(())
    })
}

/// Projects the mixture under the rotation of quaternion `q` (w, x, y, z)
/// and in-plane shift `shift` (world units) onto a `size²` image.
///
/// # Safety
/// `q` must point to 4 doubles, `shift` to 2, `out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ems_rasterize(
    m: *const EmsMixture,
    q: *const f64,
    shift: *const f64,
    size: usize,
    extent: f64,
    out: *mut f64,
    len: usize,
) -> EmsStatus {
    guard(|| {
        let m = mixture(m)?;
        let q: [f64; 4] = slice(q, 4, "q")?.try_into().expect("4 values");
        let t = slice(shift, 2, "shift")?;
        let pose = Pose::from_quaternion(&q, Vector2::new(t[0], t[1]))?;
        let grid = GridSpec::new(size, extent, 1.0)?;
        check_len(grid.num_pixels(), len)?;
        let img = rasterize(m, &pose, &grid)?;
        slice_mut(out, len, "out")?.copy_from_slice(&img.pixels);
        Ok(())
    })
}

/// Filters a `size²` image with the CTF. `input` and `out` may alias.
///
/// # Safety
/// `input` and `out` must each point to `size * size` doubles; `ctf` to one struct.
#[no_mangle]
pub unsafe extern "C" fn ems_apply_ctf(
    input: *const f64,
    out: *mut f64,
    size: usize,
    pixel_size: f64,
    ctf: *const EmsCtf,
) -> EmsStatus {
    guard(|| {
        let grid = GridSpec::new(size, emsplat::grid::DEFAULT_EXTENT, pixel_size)?;
        let n = grid.num_pixels();
        let img = RenderedImage::from_pixels(grid, slice(input, n, "input")?.to_vec())?;
        let ctf = *ctf.as_ref().ok_or(Fail::Null("ctf"))?;
        let filtered = apply_ctf(&img, &CtfParams::from(ctf))?;
        slice_mut(out, n, "out")?.copy_from_slice(&filtered.pixels);
        Ok(())
    })
}

/// Samples the mixture density on a `size³` grid over `[-extent, extent)³`.
///
/// # Safety
/// `m` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ems_voxelize(
    m: *const EmsMixture,
    size: usize,
    extent: f64,
    out: *mut f64,
    len: usize,
) -> EmsStatus {
    guard(|| {
        let m = mixture(m)?;
        let grid = GridSpec::new(size, extent, 1.0)?;
        check_len(size * size * size, len)?;
        let v = voxelize(m, &grid)?;
        slice_mut(out, len, "out")?.copy_from_slice(&v.voxels);
        Ok(())
    })
}

/// Fourier shell correlation of two `size³` volumes. Writes shells
/// `1..=size/2` into `corr` (length `size / 2`) and the resolution in Å at
/// the 0.143 threshold into `res_0143`, which is NaN when the curve never
/// drops below it.
///
/// # Safety
/// `a` and `b` must point to `size³` doubles, `corr` to `corr_len` writable
/// doubles and `res_0143` to one.
#[no_mangle]
pub unsafe extern "C" fn ems_fsc(
    a: *const f64,
    b: *const f64,
    size: usize,
    pixel_size: f64,
    corr: *mut f64,
    corr_len: usize,
    res_0143: *mut f64,
) -> EmsStatus {
    guard(|| {
        let grid = GridSpec::new(size, emsplat::grid::DEFAULT_EXTENT, pixel_size)?;
        let n = size * size * size;
        let va = VoxelVolume::from_voxels(grid, slice(a, n, "a")?.to_vec())?;
        let vb = VoxelVolume::from_voxels(grid, slice(b, n, "b")?.to_vec())?;
        let curve = fsc(&va, &vb)?;
        check_len(curve.shells.len(), corr_len)?;
        let out = slice_mut(corr, corr_len, "corr")?;
        for (o, s) in out.iter_mut().zip(&curve.shells) {
            *o = s.correlation;
        }
        put(res_0143, curve.resolution_0143.angstrom().unwrap_or(f64::NAN))
    })
}
