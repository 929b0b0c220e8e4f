//! C ABI for the `haar-tsvd` denoiser.
//!
//! Images and configurations are opaque handles created and released by this
//! library. Every fallible function returns an [`HtsvStatus`]; on failure a
//! message describing the last error on the calling thread is available from
//! [`htsv_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use haar_tsvd::io;
use haar_tsvd::metrics;
use haar_tsvd::pipeline::{denoise_with_report, DenoiseConfig, SigmaSource};
use haar_tsvd::transform::threshold_value;
use haar_tsvd::{Error, ImageTensor, Profile};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtsvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dims = 3,
    Format = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque image handle.
pub struct HtsvImage {
    inner: ImageTensor,
}

/// Opaque denoiser configuration handle.
pub struct HtsvConfig {
    inner: DenoiseConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> HtsvStatus {
    match err {
        Error::Dims(_) | Error::PatchSize { .. } | Error::Coord { .. } => HtsvStatus::Dims,
        Error::Format(_) => HtsvStatus::Format,
        Error::Numeric(_) => HtsvStatus::Numeric,
        Error::Io(_) => HtsvStatus::Io,
        Error::NotPowerOfTwo(_)
        | Error::OddGroup(_)
        | Error::Config(_)
        | Error::EmptyTrainingSet => HtsvStatus::InvalidArgument,
    }
}

struct Failure(HtsvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HtsvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HtsvStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HtsvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            HtsvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            HtsvStatus::Panic
        }
    }
}

unsafe fn config_mut<'a>(cfg: *mut HtsvConfig) -> Result<&'a mut DenoiseConfig, Failure> {
    cfg.as_mut()
        .map(|c| &mut c.inner)
        .ok_or_else(|| null("config"))
}

unsafe fn image_ref<'a>(img: *const HtsvImage) -> Result<&'a ImageTensor, Failure> {
    img.as_ref().map(|i| &i.inner).ok_or_else(|| null("image"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn write_image(out: *mut *mut HtsvImage, image: ImageTensor) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(HtsvImage { inner: image }));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn htsv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn htsv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default configuration: `ps = 8`, `K = 32`, `W = 18`, σ estimated from the
/// image, non-adaptive. Release with [`htsv_config_free`].
#[no_mangle]
pub extern "C" fn htsv_config_new() -> *mut HtsvConfig {
    Box::into_raw(Box::new(HtsvConfig {
        inner: DenoiseConfig::default(),
    }))
}

/// Parses a JSON configuration with the same fields as the CLI's config file.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_from_json(
    json: *const c_char,
    out: *mut *mut HtsvConfig,
) -> HtsvStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("output handle"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| invalid("json is not valid UTF-8"))?;
        let inner: DenoiseConfig =
            serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        inner.validate()?;
        *out = Box::into_raw(Box::new(HtsvConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_free(cfg: *mut HtsvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Uses a known noise level and disables the adaptive mode.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_sigma(cfg: *mut HtsvConfig, sigma: f64) -> HtsvStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!(
                "sigma {sigma} must be finite and nonnegative"
            )));
        }
        c.sigma = SigmaSource::User { value: sigma };
        c.adaptive = false;
        Ok(())
    })
}

/// Enables (non-zero) or disables the per-subimage estimate and adjustment.
/// Enabling switches the noise source to the built-in estimator unless
/// external values were set.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_adaptive(
    cfg: *mut HtsvConfig,
    enabled: c_int,
) -> HtsvStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        c.adaptive = enabled != 0;
        if c.adaptive && matches!(c.sigma, SigmaSource::User { .. }) {
            c.sigma = SigmaSource::Baseline;
        }
        Ok(())
    })
}

/// Per-subimage noise levels in row-major tile order; enables the adaptive
/// mode.
///
/// # Safety
/// `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_external_sigmas(
    cfg: *mut HtsvConfig,
    values: *const f64,
    len: usize,
) -> HtsvStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid(
                "external sigmas must be a nonempty list of finite nonnegative values",
            ));
        }
        c.sigma = SigmaSource::External { values: v };
        c.adaptive = true;
        Ok(())
    })
}

/// Applies `update` to a copy and keeps it only if the result validates.
unsafe fn update_config(
    cfg: *mut HtsvConfig,
    update: impl FnOnce(&mut DenoiseConfig),
) -> HtsvStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let mut next = c.clone();
        update(&mut next);
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// Patch side `ps` (at least 2).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_patch_size(
    cfg: *mut HtsvConfig,
    value: usize,
) -> HtsvStatus {
    update_config(cfg, |c| c.patch_size = value)
}

/// Group size `K` (power of two).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_group_size(
    cfg: *mut HtsvConfig,
    value: usize,
) -> HtsvStatus {
    update_config(cfg, |c| c.group_size = value)
}

/// Search radius `W`.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_window(cfg: *mut HtsvConfig, value: usize) -> HtsvStatus {
    update_config(cfg, |c| c.window = value)
}

/// Reference stride.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_stride(cfg: *mut HtsvConfig, value: usize) -> HtsvStatus {
    update_config(cfg, |c| c.stride_ref = value)
}

/// Worker threads, 0 for all cores.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_threads(cfg: *mut HtsvConfig, value: usize) -> HtsvStatus {
    update_config(cfg, |c| c.threads = value)
}

/// Seed of the adaptive vote.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_config_set_seed(cfg: *mut HtsvConfig, seed: u64) -> HtsvStatus {
    guard(|| {
        config_mut(cfg)?.adaptive_config.seed = seed;
        Ok(())
    })
}

/// Creates an `height×width×channels` image from row-major values with the
/// channel index fastest, or zeros when `data` is NULL. Three-channel images
/// default to the sRGB profile.
///
/// # Safety
/// `data` must be NULL or point to `height·width·channels` doubles.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut HtsvImage,
) -> HtsvStatus {
    guard(|| {
        let len = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(HtsvStatus::Dims, "dimensions overflow".into()))?;
        let values = if data.is_null() {
            vec![0.0; len]
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        write_image(out, ImageTensor::new(height, width, channels, values)?)
    })
}

/// Marks the image as multiband (non-zero) or sRGB (zero).
///
/// # Safety
/// `img` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_set_multiband(
    img: *mut HtsvImage,
    multiband: c_int,
) -> HtsvStatus {
    guard(|| {
        let i = img.as_mut().ok_or_else(|| null("image"))?;
        let profile = if multiband != 0 {
            Profile::Multiband
        } else {
            Profile::Srgb
        };
        i.inner =
            std::mem::replace(&mut i.inner, ImageTensor::zeros(1, 1, 1)).with_profile(profile);
        Ok(())
    })
}

/// Loads a PNG, PGM/PPM or HTSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_load(
    path: *const c_char,
    out: *mut *mut HtsvImage,
) -> HtsvStatus {
    guard(|| write_image(out, io::load(path_arg(path)?)?))
}

/// Saves in the format implied by the extension.
///
/// # Safety
/// `img` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_save(img: *const HtsvImage, path: *const c_char) -> HtsvStatus {
    guard(|| Ok(io::store(image_ref(img)?, path_arg(path)?)?))
}

/// # Safety
/// `img` must be a live handle; any output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_dims(
    img: *const HtsvImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> HtsvStatus {
    guard(|| {
        let i = image_ref(img)?;
        for (p, v) in [
            (height, i.height()),
            (width, i.width()),
            (channels, i.channels()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the values into `out`, which must hold exactly
/// `height·width·channels` doubles.
///
/// # Safety
/// `img` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_copy_data(
    img: *const HtsvImage,
    out: *mut f64,
    len: usize,
) -> HtsvStatus {
    guard(|| {
        let i = image_ref(img)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != i.data().len() {
            return Err(Failure(
                HtsvStatus::Dims,
                format!("buffer holds {len} values, image has {}", i.data().len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(i.data());
        Ok(())
    })
}

/// # Safety
/// `img` must come from this library and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn htsv_image_free(img: *mut HtsvImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Denoises `img` into a new image. `sigma_used` and `adjusted_fraction`
/// receive the mean noise level applied and the fraction of subimages whose
/// level was lowered; either may be NULL.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn htsv_denoise(
    img: *const HtsvImage,
    cfg: *const HtsvConfig,
    out: *mut *mut HtsvImage,
    sigma_used: *mut f64,
    adjusted_fraction: *mut f64,
) -> HtsvStatus {
    guard(|| {
        let i = image_ref(img)?;
        let c = cfg
            .as_ref()
            .map(|c| &c.inner)
            .ok_or_else(|| null("config"))?;
        let result = denoise_with_report(i, c)?;
        if !sigma_used.is_null() {
            *sigma_used = result.mean_sigma();
        }
        if !adjusted_fraction.is_null() {
            *adjusted_fraction = result.adjusted_fraction();
        }
        write_image(out, result.image)
    })
}

/// Adds seeded Gaussian noise into a new image.
///
/// # Safety
/// `img` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn htsv_add_awgn(
    img: *const HtsvImage,
    sigma: f64,
    seed: u64,
    out: *mut *mut HtsvImage,
) -> HtsvStatus {
    guard(|| write_image(out, metrics::add_awgn(image_ref(img)?, sigma, seed)?))
}

/// PSNR in dB with peak 255; identical images give `INFINITY`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn htsv_psnr(
    a: *const HtsvImage,
    b: *const HtsvImage,
    out: *mut f64,
) -> HtsvStatus {
    guard(|| {
        let v = metrics::psnr(image_ref(a)?, image_ref(b)?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Mean SSIM on the luma (or guide) plane.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn htsv_ssim(
    a: *const HtsvImage,
    b: *const HtsvImage,
    out: *mut f64,
) -> HtsvStatus {
    guard(|| {
        let v = metrics::ssim(image_ref(a)?, image_ref(b)?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Hard threshold `σ·√(2·ln(c·K·ps²))` used by the filter.
#[no_mangle]
pub extern "C" fn htsv_threshold_value(
    sigma: f64,
    channels: usize,
    group_size: usize,
    patch_size: usize,
) -> f64 {
    threshold_value(sigma, channels, group_size, patch_size)
}
