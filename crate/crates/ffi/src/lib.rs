//! C ABI over `pathx-core`.
//!
//! Every fallible call returns a [`PathxStatus`]. On failure the message is
//! kept per thread and read back with [`pathx_last_error_message`]. Handles
//! are opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pathx_core::autoencoder::Autoencoder;
use pathx_core::slide::{score_tile, ScoringConfig, Tile};
use pathx_core::stratify::{logrank_test, ClinicalRecord};
use pathx_core::vit::{encode_image, VitWeights};
use pathx_core::{Error, ExitCode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathxStatus {
    Ok = 0,
    InvalidArgument = 1,
    InputFormat = 2,
    Numerical = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

impl From<&Error> for PathxStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            ExitCode::Success => PathxStatus::Ok,
            ExitCode::Usage => PathxStatus::InvalidArgument,
            ExitCode::InputFormat => PathxStatus::InputFormat,
            ExitCode::Numerical => PathxStatus::Numerical,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(PathxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PathxStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PathxStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for the calling thread.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PathxStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PathxStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            PathxStatus::Panic
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

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PathxStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len < values.len() {
        return Err(Failure(
            PathxStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pathx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next pathx call on the same thread.
#[no_mangle]
pub extern "C" fn pathx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

// ------------------------------------------------------------------ scoring

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathxScoringConfig {
    pub dark_threshold: f64,
    pub min_area: usize,
    pub brightness_threshold: u8,
    pub blank_weight: f64,
}

impl From<PathxScoringConfig> for ScoringConfig {
    fn from(c: PathxScoringConfig) -> Self {
        Self {
            dark_threshold: c.dark_threshold,
            min_area: c.min_area,
            brightness_threshold: c.brightness_threshold,
            blank_weight: c.blank_weight,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathxTileScore {
    pub num_nuclei: usize,
    pub clarity: f64,
    pub blank_fraction: f64,
    pub blank_space: f64,
    pub score: f64,
}

#[no_mangle]
pub extern "C" fn pathx_scoring_config_default() -> PathxScoringConfig {
    let c = ScoringConfig::default();
    PathxScoringConfig {
        dark_threshold: c.dark_threshold,
        min_area: c.min_area,
        brightness_threshold: c.brightness_threshold,
        blank_weight: c.blank_weight,
    }
}

/// Borrows `width × height` RGB pixels, checking the size before the read.
unsafe fn tile_arg(pixels: *const u8, width: usize, height: usize) -> Result<Tile, Failure> {
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or_else(|| Failure(PathxStatus::InvalidArgument, format!("tile dimensions {width}x{height} overflow")))?;
    let px = slice(pixels, len, "pixels")?;
    Ok(Tile::new("ffi", 0, 0, (0, 0), width, height, px.to_vec())?)
}

/// Scores a row-major interleaved RGB tile. A null `config` uses defaults.
///
/// # Safety
/// `pixels` must point to `width * height * 3` bytes; `config` must be
/// null or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathx_score_tile_rgb(
    pixels: *const u8,
    width: usize,
    height: usize,
    config: *const PathxScoringConfig,
    out: *mut PathxTileScore,
) -> PathxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let tile = tile_arg(pixels, width, height)?;
        let cfg = if config.is_null() {
            ScoringConfig::default()
        } else {
            (*config).into()
        };
        let s = score_tile(&tile, &cfg);
        *out = PathxTileScore {
            num_nuclei: s.num_nuclei,
            clarity: s.clarity,
            blank_fraction: s.blank_fraction,
            blank_space: s.blank_space,
            score: s.score,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------- vit

/// Opaque ViT encoder.
pub struct PathxVit {
    weights: VitWeights,
}

/// Loads encoder weights from a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathx_vit_load(path: *const c_char, out: *mut *mut PathxVit) -> PathxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let weights = VitWeights::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PathxVit { weights }));
        Ok(())
    })
}

/// # Safety
/// `vit` must be null or a handle from [`pathx_vit_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathx_vit_free(vit: *mut PathxVit) {
    if !vit.is_null() {
        drop(Box::from_raw(vit));
    }
}

/// Required square input side, or 0 for a null handle.
///
/// # Safety
/// `vit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathx_vit_image_size(vit: *const PathxVit) -> usize {
    vit.as_ref().map_or(0, |v| v.weights.config.image_size)
}

/// Feature width, or 0 for a null handle.
///
/// # Safety
/// `vit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathx_vit_feature_dim(vit: *const PathxVit) -> usize {
    vit.as_ref().map_or(0, |v| v.weights.config.embed_dim)
}

/// Encodes one `image_size × image_size` RGB tile into `out`.
///
/// # Safety
/// `vit` must be a live handle; `pixels` must hold `width * height * 3`
/// bytes; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pathx_vit_encode_rgb(
    vit: *const PathxVit,
    pixels: *const u8,
    width: usize,
    height: usize,
    out: *mut f64,
    out_len: usize,
) -> PathxStatus {
    guard(|| {
        let vit = vit.as_ref().ok_or_else(|| null("vit"))?;
        let tile = tile_arg(pixels, width, height)?;
        let feature = encode_image(&tile, &vit.weights)?;
        write_out(&feature, out, out_len)
    })
}

// -------------------------------------------------------------- autoencoder

/// Opaque trained autoencoder with its input scaler.
pub struct PathxAutoencoder {
    model: Autoencoder,
}

/// Loads a trained autoencoder from a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathx_ae_load(path: *const c_char, out: *mut *mut PathxAutoencoder) -> PathxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = Autoencoder::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PathxAutoencoder { model }));
        Ok(())
    })
}

/// # Safety
/// `ae` must be null or a handle from [`pathx_ae_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathx_ae_free(ae: *mut PathxAutoencoder) {
    if !ae.is_null() {
        drop(Box::from_raw(ae));
    }
}

/// Raw feature width, or 0 for a null handle.
///
/// # Safety
/// `ae` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathx_ae_input_dim(ae: *const PathxAutoencoder) -> usize {
    ae.as_ref().map_or(0, |a| a.model.input_dim())
}

/// Latent width, or 0 for a null handle.
///
/// # Safety
/// `ae` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathx_ae_latent_dim(ae: *const PathxAutoencoder) -> usize {
    ae.as_ref().map_or(0, |a| a.model.latent_dim())
}

/// Scales and encodes one raw feature vector into `out`.
///
/// # Safety
/// `ae` must be a live handle; `features` must hold `len` doubles; `out`
/// must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pathx_ae_encode(
    ae: *const PathxAutoencoder,
    features: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> PathxStatus {
    guard(|| {
        let ae = ae.as_ref().ok_or_else(|| null("ae"))?;
        let latent = ae.model.encode_raw(slice(features, len, "features")?)?;
        write_out(&latent, out, out_len)
    })
}

// ------------------------------------------------------------------ logrank

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathxLogRank {
    pub observed_a: f64,
    pub observed_b: f64,
    pub expected_a: f64,
    pub expected_b: f64,
    pub variance: f64,
    pub statistic: f64,
    pub p_value: f64,
    /// Nonzero when the variance is zero.
    pub degenerate: u8,
}

unsafe fn records(times: *const f64, events: *const u8, n: usize, group: &str) -> Result<Vec<ClinicalRecord>, Failure> {
    let t = slice(times, n, "times")?;
    let e = slice(events, n, "events")?;
    Ok(t.iter()
        .zip(e)
        .enumerate()
        .map(|(i, (&time, &event))| ClinicalRecord::new(format!("{group}{i}"), time, event != 0))
        .collect())
}

/// Two-group log-rank test. `events[i]` is nonzero for an observed death.
///
/// # Safety
/// Each times/events pair must hold its group's count; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pathx_logrank(
    times_a: *const f64,
    events_a: *const u8,
    n_a: usize,
    times_b: *const f64,
    events_b: *const u8,
    n_b: usize,
    out: *mut PathxLogRank,
) -> PathxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = records(times_a, events_a, n_a, "a")?;
        let b = records(times_b, events_b, n_b, "b")?;
        let r = logrank_test(&a, &b)?;
        *out = PathxLogRank {
            observed_a: r.observed[0],
            observed_b: r.observed[1],
            expected_a: r.expected[0],
            expected_b: r.expected[1],
            variance: r.variance,
            statistic: r.statistic,
            p_value: r.p_value,
            degenerate: u8::from(r.degenerate),
        };
        Ok(())
    })
}
