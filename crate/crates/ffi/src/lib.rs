//! C ABI over `resonant-auth`.
//!
//! Every entry point returns an [`RaStatus`]; on failure a message is kept
//! per thread and can be read with [`ra_last_error_message`]. Handles are
//! opaque and must be released with their matching `_free` function.
//! Panics never cross the boundary: they surface as `RA_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use resonant_auth::audio_io::{load_wav, AudioClip};
use resonant_auth::models::{self, ModelBundle, VerificationReport};
use resonant_auth::Error;

/// Call outcome. Verdicts are reported in [`RaReport`], not here.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Unsupported = 5,
    Empty = 6,
    NoOnset = 7,
    SilentSegment = 8,
    Argument = 9,
    Shape = 10,
    Compatibility = 11,
    Config = 12,
    Manifest = 13,
    State = 14,
    Panic = 15,
}

impl RaStatus {
    fn of(e: &Error) -> Self {
        match e.root() {
            Error::Format(_) => RaStatus::Format,
            Error::Unsupported(_) => RaStatus::Unsupported,
            Error::Empty(_) => RaStatus::Empty,
            Error::Io { .. } => RaStatus::Io,
            Error::Manifest(_) => RaStatus::Manifest,
            Error::NoOnset => RaStatus::NoOnset,
            Error::SilentSegment { .. } => RaStatus::SilentSegment,
            Error::Argument(_) => RaStatus::Argument,
            Error::Shape(_) => RaStatus::Shape,
            Error::State(_) => RaStatus::State,
            Error::Compatibility(_) => RaStatus::Compatibility,
            Error::Config(_) => RaStatus::Config,
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }
}

/// A trained model bundle.
pub struct RaBundle {
    inner: ModelBundle,
    labels: Vec<CString>,
}

/// Result of verifying one recording.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaReport {
    pub distance: f64,
    pub threshold: f64,
    pub authentic: bool,
    /// Index into the bundle's label table, or -1 when counterfeit.
    pub label_index: i32,
    /// Classifier probability of `label_index`; NaN when counterfeit.
    pub confidence: f64,
    pub original_peak_count: u32,
    pub reconstructed_peak_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (RaStatus, String)>) -> RaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RaStatus, String) {
    (RaStatus::of(&e), e.to_string())
}

fn null(what: &str) -> (RaStatus, String) {
    (RaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (RaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (RaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn bundle_ref<'a>(b: *const RaBundle) -> Result<&'a RaBundle, (RaStatus, String)> {
    b.as_ref().ok_or_else(|| null("bundle"))
}

fn to_report(bundle: &RaBundle, r: &VerificationReport) -> RaReport {
    let label_index = r
        .label
        .as_ref()
        .and_then(|l| bundle.inner.labels().iter().position(|x| x == l))
        .map_or(-1, |i| i as i32);
    RaReport {
        distance: r.distance,
        threshold: r.threshold,
        authentic: r.authentic,
        label_index,
        confidence: r.confidence.unwrap_or(f64::NAN),
        original_peak_count: r.original_peaks.peaks.len() as u32,
        reconstructed_peak_count: r.reconstructed_peaks.peaks.len() as u32,
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ra_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a bundle file. On success `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_load(path: *const c_char, out: *mut *mut RaBundle) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = models::load_bundle(&path).map_err(lib_err)?;
        let labels = inner
            .labels()
            .iter()
            .map(|l| CString::new(l.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(RaBundle { inner, labels }));
        Ok(())
    })
}

/// Releases a bundle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_free(bundle: *mut RaBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Number of coin classes the bundle recognizes; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_label_count(bundle: *const RaBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.labels.len())
}

/// Class name at `index`, owned by the bundle; NULL if out of range.
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_label(bundle: *const RaBundle, index: usize) -> *const c_char {
    bundle
        .as_ref()
        .and_then(|b| b.labels.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Decision threshold on the peak distance; NaN for NULL.
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_threshold(bundle: *const RaBundle) -> f64 {
    bundle
        .as_ref()
        .map_or(f64::NAN, |b| b.inner.threshold.threshold)
}

/// Spectrum width the bundle was trained with (8820 = reference pipeline).
#[no_mangle]
pub unsafe extern "C" fn ra_bundle_spectrum_width(bundle: *const RaBundle) -> usize {
    bundle
        .as_ref()
        .map_or(0, |b| b.inner.preprocess.spectrum_width)
}

/// Verifies a mono or stereo PCM / float WAV file.
#[no_mangle]
pub unsafe extern "C" fn ra_verify_wav(
    bundle: *const RaBundle,
    path: *const c_char,
    out: *mut RaReport,
) -> RaStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let clip = load_wav(&path).map_err(lib_err)?;
        let report = models::verify(&clip, &b.inner).map_err(lib_err)?;
        *out = to_report(b, &report);
        Ok(())
    })
}

/// Verifies `len` mono samples in [-1, 1] at `sample_rate` Hz.
#[no_mangle]
pub unsafe extern "C" fn ra_verify_samples(
    bundle: *const RaBundle,
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut RaReport,
) -> RaStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if samples.is_null() {
            return Err(null("samples"));
        }
        let data = std::slice::from_raw_parts(samples, len).to_vec();
        let clip = AudioClip::new(data, sample_rate).map_err(lib_err)?;
        let report = models::verify(&clip, &b.inner).map_err(lib_err)?;
        *out = to_report(b, &report);
        Ok(())
    })
}

/// Verifies a WAV file and returns the one-line JSON report in `*out`;
/// release it with [`ra_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ra_verify_wav_json(
    bundle: *const RaBundle,
    path: *const c_char,
    out: *mut *mut c_char,
) -> RaStatus {
    guard(|| {
        let b = bundle_ref(bundle)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let clip = load_wav(&path).map_err(lib_err)?;
        let report = models::verify(&clip, &b.inner).map_err(lib_err)?;
        let line = report.to_json_line(path.to_str());
        *out = CString::new(line).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
