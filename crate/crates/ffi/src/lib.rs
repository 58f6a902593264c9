//! C bindings for umforge.
//!
//! Images and masks are opaque handles owned by the caller and released with
//! `um_image_free` / `um_mask_free`. Every fallible call returns a [`UmStatus`];
//! on failure `um_last_error` describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use umforge::edit::{insert_patch, PatchSpec};
use umforge::imaging::hu_window;
use umforge::metrics::{dice, frechet_distance, gaussian_summary, kl_hu_histogram, wilcoxon_signed_rank};
use umforge::metrics::{FeatureSet, Scale, Task, WilcoxonMethod};
use umforge::umask::{generate_unsupervised_mask, SlicParams, UnsupervisedMask};
use umforge::{Error, GrayImage, SegMask};

/// Version of the UMFT feature format understood by this build.
pub const UM_UMFT_VERSION: u16 = umforge::metrics::UMFT_VERSION;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InsufficientData = 4,
    Validation = 5,
    Numerical = 6,
    Format = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Grayscale image in 8-bit or HU space.
pub struct UmImage(GrayImage);

/// Unsupervised mask: quantized superpixel intensities.
pub struct UmMask(UnsupervisedMask);

/// Wilcoxon signed-rank result.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UmWilcoxon {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// P(W+ >= observed).
    pub p_greater: f64,
    /// P(W+ <= observed).
    pub p_less: f64,
    pub p_two_sided: f64,
    /// True for the exact null distribution, false for the normal approximation.
    pub exact: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(UmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parameter(_) => UmStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => UmStatus::DimensionMismatch,
            Error::SeriesTooShort { .. } | Error::InsufficientSamples { .. } | Error::InsufficientData(_) => {
                UmStatus::InsufficientData
            }
            Error::Validation(_) | Error::IncompleteGrid { .. } => UmStatus::Validation,
            Error::Numerical(_) => UmStatus::Numerical,
            Error::Format(_) => UmStatus::Format,
            Error::Io { .. } => UmStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(UmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UmStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Failure(UmStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => UmStatus::Ok,
        Err(Failure(status, msg)) => {
            set_error(msg);
            status
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn pixel_count(width: usize, height: usize) -> Result<usize, Failure> {
    width
        .checked_mul(height)
        .ok_or_else(|| Failure(UmStatus::InvalidArgument, "image size overflows".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn um_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or NULL if none failed yet.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn um_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds an 8-bit image from `width * height` row-major bytes.
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_image_from_u8(
    width: usize,
    height: usize,
    pixels: *const u8,
    out_image: *mut *mut UmImage,
) -> UmStatus {
    guard(|| {
        let out_image = out(out_image, "out_image")?;
        let px = slice(pixels, pixel_count(width, height)?, "pixels")?;
        let img = GrayImage::from_u8(width, height, px)?;
        *out_image = Box::into_raw(Box::new(UmImage(img)));
        Ok(())
    })
}

/// Builds an HU image from `width * height` row-major values.
///
/// # Safety
/// `pixels` must point to `width * height` readable floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_image_from_hu(
    width: usize,
    height: usize,
    pixels: *const f32,
    out_image: *mut *mut UmImage,
) -> UmStatus {
    guard(|| {
        let out_image = out(out_image, "out_image")?;
        let px = slice(pixels, pixel_count(width, height)?, "pixels")?;
        let img = GrayImage::from_hu(width, height, px.to_vec())?;
        *out_image = Box::into_raw(Box::new(UmImage(img)));
        Ok(())
    })
}

/// Releases an image. NULL is ignored.
///
/// # Safety
/// `image` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn um_image_free(image: *mut UmImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Writes the image width and height.
///
/// # Safety
/// `image` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_image_dims(image: *const UmImage, width: *mut usize, height: *mut usize) -> UmStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        *out(width, "width")? = img.width();
        *out(height, "height")? = img.height();
        Ok(())
    })
}

/// Copies an 8-bit image into `buffer`, which must hold `width * height` bytes.
///
/// # Safety
/// `image` must be a live handle and `buffer` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn um_image_copy_u8(image: *const UmImage, buffer: *mut u8, len: usize) -> UmStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        let bytes = img.to_u8()?;
        if len < bytes.len() {
            return Err(Failure(UmStatus::BufferTooSmall, format!("need {} bytes, got {len}", bytes.len())));
        }
        slice_mut(buffer, bytes.len(), "buffer")?.copy_from_slice(&bytes);
        Ok(())
    })
}

/// Clips an HU image to `[lo, hi]` and rescales it to 8-bit.
///
/// # Safety
/// `image` must be a live handle and `out_image` writable.
#[no_mangle]
pub unsafe extern "C" fn um_hu_window(image: *const UmImage, lo: f32, hi: f32, out_image: *mut *mut UmImage) -> UmStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        let out_image = out(out_image, "out_image")?;
        let windowed = hu_window(img, lo, hi)?;
        *out_image = Box::into_raw(Box::new(UmImage(windowed)));
        Ok(())
    })
}

/// Runs SLIC with `superpixels` requested superpixels, averages each, and quantizes
/// to multiples of `threshold`. Pass 0 for `compactness` or `max_iters` to use the defaults.
///
/// # Safety
/// `image` must be a live 8-bit handle and `out_mask` writable.
#[no_mangle]
pub unsafe extern "C" fn um_generate_unsupervised_mask(
    image: *const UmImage,
    superpixels: usize,
    compactness: f64,
    max_iters: usize,
    threshold: u32,
    out_mask: *mut *mut UmMask,
) -> UmStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        let out_mask = out(out_mask, "out_mask")?;
        let mut params = SlicParams::new(superpixels);
        if compactness != 0.0 {
            params.compactness = compactness;
        }
        if max_iters != 0 {
            params.max_iters = max_iters;
        }
        let mask = generate_unsupervised_mask(img, &params, threshold)?;
        *out_mask = Box::into_raw(Box::new(UmMask(mask)));
        Ok(())
    })
}

/// Wraps existing mask bytes, checking they are multiples of `threshold`.
///
/// # Safety
/// `values` must point to `width * height` readable bytes and `out_mask` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_mask_from_u8(
    width: usize,
    height: usize,
    values: *const u8,
    threshold: u8,
    out_mask: *mut *mut UmMask,
) -> UmStatus {
    guard(|| {
        let out_mask = out(out_mask, "out_mask")?;
        let px = slice(values, pixel_count(width, height)?, "values")?;
        let mask = UnsupervisedMask::from_u8(width, height, px, threshold, None)?;
        *out_mask = Box::into_raw(Box::new(UmMask(mask)));
        Ok(())
    })
}

/// Releases a mask. NULL is ignored.
///
/// # Safety
/// `mask` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn um_mask_free(mask: *mut UmMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Writes the mask width, height and quantization threshold.
///
/// # Safety
/// `mask` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_mask_info(
    mask: *const UmMask,
    width: *mut usize,
    height: *mut usize,
    threshold: *mut u8,
) -> UmStatus {
    guard(|| {
        let m = &handle(mask, "mask")?.0;
        let (w, h) = m.dims();
        *out(width, "width")? = w;
        *out(height, "height")? = h;
        *out(threshold, "threshold")? = m.threshold_t();
        Ok(())
    })
}

/// Copies the mask values, row-major, into `buffer` of at least `width * height` bytes.
///
/// # Safety
/// `mask` must be a live handle and `buffer` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn um_mask_copy_values(mask: *const UmMask, buffer: *mut u8, len: usize) -> UmStatus {
    guard(|| {
        let bytes = handle(mask, "mask")?.0.bytes();
        if len < bytes.len() {
            return Err(Failure(UmStatus::BufferTooSmall, format!("need {} bytes, got {len}", bytes.len())));
        }
        slice_mut(buffer, bytes.len(), "buffer")?.copy_from_slice(&bytes);
        Ok(())
    })
}

/// Distinct supercluster values in ascending order. `count` always receives the
/// number of values; at most `capacity` are copied.
///
/// # Safety
/// `mask` must be a live handle, `values` must hold `capacity` bytes, `count` writable.
#[no_mangle]
pub unsafe extern "C" fn um_mask_superclusters(
    mask: *const UmMask,
    values: *mut u8,
    capacity: usize,
    count: *mut usize,
) -> UmStatus {
    guard(|| {
        let v = handle(mask, "mask")?.0.supercluster_values();
        *out(count, "count")? = v.len();
        let n = v.len().min(capacity);
        slice_mut(values, n, "values")?.copy_from_slice(&v[..n]);
        if n < v.len() {
            return Err(Failure(UmStatus::BufferTooSmall, format!("need {} values, got {capacity}", v.len())));
        }
        Ok(())
    })
}

/// Paints an axis-aligned ellipse with `intensity` into a copy of `mask`.
/// `footprint` receives the number of pixels written.
///
/// # Safety
/// `mask` must be a live handle; `out_mask` and `footprint` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_mask_insert_ellipse(
    mask: *const UmMask,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    intensity: u8,
    out_mask: *mut *mut UmMask,
    footprint: *mut usize,
) -> UmStatus {
    guard(|| {
        let m = &handle(mask, "mask")?.0;
        let out_mask = out(out_mask, "out_mask")?;
        let footprint = out(footprint, "footprint")?;
        let edited = insert_patch(m, &PatchSpec::ellipse(cx, cy, rx, ry, intensity))?;
        *footprint = edited.footprint_pixels;
        *out_mask = Box::into_raw(Box::new(UmMask(edited.mask)));
        Ok(())
    })
}

fn feature_set(n: usize, d: usize, data: &[f32], name: &str) -> Result<FeatureSet, Failure> {
    // Scale and task tags are irrelevant for a single distance.
    Ok(FeatureSet::new(n, d, data.to_vec(), Scale::S128, Task::Imagenet, name)?)
}

/// Fréchet distance between Gaussian fits of two row-major `n x dim` feature matrices.
///
/// # Safety
/// `a` and `b` must hold `n_a * dim` and `n_b * dim` floats; `distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_frechet_distance(
    a: *const f32,
    n_a: usize,
    b: *const f32,
    n_b: usize,
    dim: usize,
    distance: *mut f64,
) -> UmStatus {
    guard(|| {
        let distance = out(distance, "distance")?;
        let len = |n: usize| {
            n.checked_mul(dim)
                .ok_or_else(|| Failure(UmStatus::InvalidArgument, "feature matrix size overflows".into()))
        };
        let fa = feature_set(n_a, dim, slice(a, len(n_a)?, "a")?, "a")?;
        let fb = feature_set(n_b, dim, slice(b, len(n_b)?, "b")?, "b")?;
        *distance = frechet_distance(&gaussian_summary(&fa)?, &gaussian_summary(&fb)?)?.value;
        Ok(())
    })
}

/// Wilcoxon signed-rank test on `n` paired values, differences taken as `a - b`.
///
/// # Safety
/// `a` and `b` must hold `n` doubles and `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_wilcoxon(a: *const f64, b: *const f64, n: usize, result: *mut UmWilcoxon) -> UmStatus {
    guard(|| {
        let result = out(result, "result")?;
        let r = wilcoxon_signed_rank(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *result = UmWilcoxon {
            n: r.n,
            w_plus: r.w_plus,
            w_minus: r.w_minus,
            p_greater: r.p_greater,
            p_less: r.p_less,
            p_two_sided: r.p_two_sided,
            exact: r.method == WilcoxonMethod::Exact,
        };
        Ok(())
    })
}

/// Dice overlap of `label` between two `width x height` label maps. Two masks without
/// the label score 1.
///
/// # Safety
/// `a` and `b` must hold `width * height` bytes and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_dice(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    label: u8,
    score: *mut f64,
) -> UmStatus {
    guard(|| {
        let score = out(score, "score")?;
        let n = pixel_count(width, height)?;
        let ma = SegMask::new(width, height, slice(a, n, "a")?.to_vec())?;
        let mb = SegMask::new(width, height, slice(b, n, "b")?.to_vec())?;
        *score = dice(&ma, &mb, label)?.value;
        Ok(())
    })
}

/// KL(real || synth) in nats between HU histograms with `bin_width` bins over `[lo, hi)`.
///
/// # Safety
/// `real` and `synth` must hold `n_real` and `n_synth` doubles; `kl` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_kl_hu_histogram(
    real: *const f64,
    n_real: usize,
    synth: *const f64,
    n_synth: usize,
    bin_width: f64,
    lo: f64,
    hi: f64,
    kl: *mut f64,
) -> UmStatus {
    guard(|| {
        let kl = out(kl, "kl")?;
        *kl = kl_hu_histogram(slice(real, n_real, "real")?, slice(synth, n_synth, "synth")?, bin_width, (lo, hi))?;
        Ok(())
    })
}
