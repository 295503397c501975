//! C ABI over the `volsr` toolkit.
//!
//! Volumes and models cross the boundary as opaque handles created by a
//! `*_new`, `*_read` or `*_load` function and released with the matching
//! `*_free`. Every fallible function returns a [`VolsrStatus`]; on failure
//! the message is kept per thread and read back with [`volsr_last_error`].
//! Panics never unwind into the caller: they surface as
//! `VOLSR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use volsr::acquisition::{degrade, DegradeConfig};
use volsr::cli::{upsample_with, UpsampleMethod, VERSION};
use volsr::metrics::evaluate;
use volsr::srnet::{load_checkpoint, NetworkParams};
use volsr::volume::{generate_phantom, read_volume, write_volume, PhantomSpec};
use volsr::{Error, Volume};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NotFound = 4,
    Io = 5,
    Format = 6,
    Checkpoint = 7,
    ConfigMismatch = 8,
    Runtime = 9,
    Panic = 10,
}

/// Opaque volume handle.
pub struct VolsrVolume(Volume);

/// Opaque handle to trained network parameters.
pub struct VolsrModel(NetworkParams<f32>);

/// Scores of a prediction against ground truth. `psnr_db` is `+inf` for an
/// exact match.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VolsrMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    pub ncc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VolsrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Param(_) => VolsrStatus::InvalidArgument,
            Error::Shape(_) => VolsrStatus::Shape,
            Error::NotFound(_) => VolsrStatus::NotFound,
            Error::Io { .. } => VolsrStatus::Io,
            Error::MalformedHeader(_)
            | Error::HeaderValidation(_)
            | Error::Truncated { .. }
            | Error::UnsupportedEncoding(_)
            | Error::NiftiMagic
            | Error::NiftiDatatype(_)
            | Error::NiftiDims(_)
            | Error::Json(_) => VolsrStatus::Format,
            Error::CheckpointVersion { .. } | Error::CheckpointCorrupt(_) => {
                VolsrStatus::Checkpoint
            }
            Error::ConfigMismatch(_) => VolsrStatus::ConfigMismatch,
            _ => VolsrStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VolsrStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VolsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VolsrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VolsrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            VolsrStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn triple<T: Copy>(p: *const T, what: &str) -> Result<[T; 3], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. The string stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn volsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Forget the last error of this thread.
#[no_mangle]
pub extern "C" fn volsr_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version, including the checkpoint format version. Static storage.
#[no_mangle]
pub extern "C" fn volsr_version() -> *const c_char {
    static V: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    V.get_or_init(|| CString::new(VERSION).unwrap()).as_ptr()
}

/// Create a volume from `dims` (3 values), `spacing` (3 values, mm) and
/// `len = nx*ny*nz` samples with x fastest. The data is copied.
///
/// # Safety
/// `dims` and `spacing` must point to 3 values, `data` to `len` floats and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_new(
    dims: *const usize,
    spacing: *const f64,
    data: *const f32,
    len: usize,
    out: *mut *mut VolsrVolume,
) -> VolsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dims = triple(dims, "dims")?;
        let spacing = triple(spacing, "spacing")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        put(out, VolsrVolume(Volume::new(dims, spacing, samples)?));
        Ok(())
    })
}

/// Read a `.vvol` file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_read(
    path: *const c_char,
    out: *mut *mut VolsrVolume,
) -> VolsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, VolsrVolume(read_volume(&path)?));
        Ok(())
    })
}

/// Write `vol` as a `.vvol` file.
///
/// # Safety
/// `vol` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_write(
    vol: *const VolsrVolume,
    path: *const c_char,
) -> VolsrStatus {
    guard(|| {
        let vol = ref_arg(vol, "vol")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        write_volume(&vol.0, &path)?;
        Ok(())
    })
}

/// Copy the dimensions (3 values) into `out_dims`.
///
/// # Safety
/// `vol` must be a live handle and `out_dims` writable for 3 values.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_dims(
    vol: *const VolsrVolume,
    out_dims: *mut usize,
) -> VolsrStatus {
    guard(|| {
        let vol = ref_arg(vol, "vol")?;
        if out_dims.is_null() {
            return Err(null("out_dims"));
        }
        ptr::copy_nonoverlapping(vol.0.dims().as_ptr(), out_dims, 3);
        Ok(())
    })
}

/// Copy the voxel spacing (3 values, mm) into `out_spacing`.
///
/// # Safety
/// `vol` must be a live handle and `out_spacing` writable for 3 values.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_spacing(
    vol: *const VolsrVolume,
    out_spacing: *mut f64,
) -> VolsrStatus {
    guard(|| {
        let vol = ref_arg(vol, "vol")?;
        if out_spacing.is_null() {
            return Err(null("out_spacing"));
        }
        ptr::copy_nonoverlapping(vol.0.spacing().as_ptr(), out_spacing, 3);
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `vol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_len(vol: *const VolsrVolume) -> usize {
    vol.as_ref().map_or(0, |v| v.0.len())
}

/// Borrow the samples, x fastest. Valid until the handle is freed; null for
/// a null handle.
///
/// # Safety
/// `vol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_data(vol: *const VolsrVolume) -> *const f32 {
    vol.as_ref().map_or(ptr::null(), |v| v.0.data().as_ptr())
}

/// Release a volume. Null is ignored.
///
/// # Safety
/// `vol` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn volsr_volume_free(vol: *mut VolsrVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Generate a phantom. `kind` is `nested-ellipsoids`, `line-gratings` or
/// `mixed`; spacing is 1 mm.
///
/// # Safety
/// `kind` must be a nul-terminated string, `dims` point to 3 values and
/// `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_phantom(
    kind: *const c_char,
    dims: *const usize,
    seed: u64,
    out: *mut *mut VolsrVolume,
) -> VolsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = str_arg(kind, "kind")?.parse()?;
        let spec = PhantomSpec::new(kind, triple(dims, "dims")?, seed);
        put(out, VolsrVolume(generate_phantom(&spec)?));
        Ok(())
    })
}

/// Blur, decimate in-plane by `factor` and add Rician noise of
/// `noise_sigma`.
///
/// # Safety
/// `vol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_degrade(
    vol: *const VolsrVolume,
    factor: usize,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut VolsrVolume,
) -> VolsrStatus {
    guard(|| {
        let vol = ref_arg(vol, "vol")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = DegradeConfig {
            noise_sigma,
            seed,
            ..DegradeConfig::new(factor)
        };
        put(out, VolsrVolume(degrade(&vol.0, &cfg)?));
        Ok(())
    })
}

/// Upsample in-plane by `factor`. `method` is `none`, `linear`, `bspline` or
/// `cnn`; `cnn` needs `model`, which is otherwise ignored and may be null.
///
/// # Safety
/// `vol` must be a live handle, `method` a nul-terminated string, `model`
/// null or a live handle, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_upsample(
    vol: *const VolsrVolume,
    method: *const c_char,
    factor: usize,
    model: *const VolsrModel,
    out: *mut *mut VolsrVolume,
) -> VolsrStatus {
    guard(|| {
        let vol = ref_arg(vol, "vol")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method: UpsampleMethod = str_arg(method, "method")?.parse()?;
        let params = model.as_ref().map(|m| &m.0);
        if method == UpsampleMethod::Cnn && params.is_none() {
            return Err(null("model"));
        }
        put(
            out,
            VolsrVolume(upsample_with(method, &vol.0, factor, params)?),
        );
        Ok(())
    })
}

/// Score `pred` against `truth`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_metrics(
    pred: *const VolsrVolume,
    truth: *const VolsrVolume,
    out: *mut VolsrMetrics,
) -> VolsrStatus {
    guard(|| {
        let pred = ref_arg(pred, "pred")?;
        let truth = ref_arg(truth, "truth")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = evaluate(&pred.0, &truth.0)?;
        *out = VolsrMetrics {
            psnr_db: r.psnr_db,
            ssim: r.ssim,
            ncc: r.ncc,
        };
        Ok(())
    })
}

/// Load network parameters from a checkpoint file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn volsr_model_load(
    path: *const c_char,
    out: *mut *mut VolsrModel,
) -> VolsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, VolsrModel(load_checkpoint(&path)?.params));
        Ok(())
    })
}

/// Upsampling factor of a model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn volsr_model_factor(model: *const VolsrModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.factor)
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn volsr_model_free(model: *mut VolsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
