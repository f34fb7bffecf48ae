//! C interface to splicedet.
//!
//! Objects cross the boundary as opaque pointers that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`SdStatus`]; on failure `sd_last_error` gives a message that stays valid
//! until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use splicedet::audio::{resample, AudioSignal, WORKING_RATE};
use splicedet::cli::detect_signal;
use splicedet::features::{assemble, FeatureStack};
use splicedet::forgery::{generate_dataset, Assets, ScenarioConfig, Split};
use splicedet::metrics::{jaccard, match_points, recall};
use splicedet::model::{load_checkpoint, Hypothesis, Model};
use splicedet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checkpoint = 5,
    MissingAsset = 6,
    Config = 7,
    NonFinite = 8,
    Failed = 9,
    Panic = 10,
}

/// Loaded detector.
pub struct SdModel(Model<f32>);

/// Ranked hypotheses from one detection.
pub struct SdDetection {
    hyps: Vec<Hypothesis>,
    positions: Vec<Vec<f64>>,
}

/// Model input features, row-major `frames × width`.
pub struct SdFeatures(FeatureStack);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdWindowScore {
    pub matched: usize,
    pub jaccard: f64,
    pub recall: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SdStatus {
    match e {
        Error::Io { .. } => SdStatus::Io,
        Error::Format { .. } | Error::Unsupported(_) | Error::Json(_) => SdStatus::Format,
        Error::Checkpoint(_) => SdStatus::Checkpoint,
        Error::MissingAsset(_) => SdStatus::MissingAsset,
        Error::Config(_) => SdStatus::Config,
        Error::NonFinite(_) => SdStatus::NonFinite,
        Error::Contract(_) | Error::Degenerate(_) => SdStatus::InvalidArgument,
        _ => SdStatus::Failed,
    }
}

enum Fail {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            SdStatus::NullArgument
        }
        Ok(Err(Fail::Invalid(msg))) => {
            set_error(msg);
            SdStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Non-null pointers must be valid for writes for the duration of the call.
unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn signal(samples: *const f32, len: usize, rate: u32) -> Result<AudioSignal, Fail> {
    if rate == 0 {
        return Err(Fail::Invalid("sample rate must be positive".into()));
    }
    let s = slice_arg(samples, len, "samples")?;
    let sig = AudioSignal::new(s.iter().map(|&x| x as f64).collect(), rate);
    Ok(resample(&sig, WORKING_RATE)?)
}

/// Message for the most recent failure on this thread; empty if none.
/// The pointer is owned by the library.
#[no_mangle]
pub extern "C" fn sd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads an SFCK checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_load(path: *const c_char, out: *mut *mut SdModel) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = str_arg(path, "path")?;
        let model: Model<f32> = load_checkpoint(PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(SdModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `sd_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_model_free(model: *mut SdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_parameter_count(model: *const SdModel, out: *mut usize) -> SdStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        *out_ptr(out, "out")? = m.0.parameter_count();
        Ok(())
    })
}

/// Decodes up to `topn` ranked hypotheses for mono audio at `sample_rate`.
///
/// # Safety
/// `samples` must hold `len` floats; `model` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_detect(
    model: *const SdModel,
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    topn: usize,
    out: *mut *mut SdDetection,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        if topn == 0 {
            return Err(Fail::Invalid("topn must be at least 1".into()));
        }
        let sig = signal(samples, len, sample_rate)?;
        let hyps = detect_signal(&m.0, &sig, topn)?;
        let positions = hyps.iter().map(|h| h.seq.positions()).collect();
        *out = Box::into_raw(Box::new(SdDetection { hyps, positions }));
        Ok(())
    })
}

/// # Safety
/// `det` must be a live detection handle.
#[no_mangle]
pub unsafe extern "C" fn sd_detection_count(det: *const SdDetection) -> usize {
    det.as_ref().map_or(0, |d| d.hyps.len())
}

/// Splice positions (seconds) of hypothesis `index`; zero length means no
/// splice. The array lives as long as `det`.
///
/// # Safety
/// `det` must be live; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_detection_positions(
    det: *const SdDetection,
    index: usize,
    positions: *mut *const f64,
    len: *mut usize,
) -> SdStatus {
    guard(|| {
        let d = det.as_ref().ok_or(Fail::Null("det"))?;
        let p = d
            .positions
            .get(index)
            .ok_or_else(|| Fail::Invalid(format!("hypothesis {index} of {}", d.hyps.len())))?;
        *out_ptr(positions, "positions")? = p.as_ptr();
        *out_ptr(len, "len")? = p.len();
        Ok(())
    })
}

/// Length-normalized log-probability and truncation flag of hypothesis
/// `index`.
///
/// # Safety
/// `det` must be live; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_detection_score(
    det: *const SdDetection,
    index: usize,
    score: *mut f64,
    truncated: *mut bool,
) -> SdStatus {
    guard(|| {
        let d = det.as_ref().ok_or(Fail::Null("det"))?;
        let h = d
            .hyps
            .get(index)
            .ok_or_else(|| Fail::Invalid(format!("hypothesis {index} of {}", d.hyps.len())))?;
        *out_ptr(score, "score")? = h.score;
        *out_ptr(truncated, "truncated")? = h.truncated;
        Ok(())
    })
}

/// # Safety
/// `det` must come from `sd_detect` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_detection_free(det: *mut SdDetection) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Computes the normalized feature matrix for mono audio.
///
/// # Safety
/// `samples` must hold `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_features(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut *mut SdFeatures,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let sig = signal(samples, len, sample_rate)?;
        *out = Box::into_raw(Box::new(SdFeatures(assemble(&sig)?)));
        Ok(())
    })
}

/// Shape and data of a feature matrix. `data` lives as long as `f`.
///
/// # Safety
/// `f` must be live; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_features_view(
    f: *const SdFeatures,
    frames: *mut usize,
    width: *mut usize,
    data: *mut *const f32,
) -> SdStatus {
    guard(|| {
        let f = f.as_ref().ok_or(Fail::Null("features"))?;
        *out_ptr(frames, "frames")? = f.0.n_frames;
        *out_ptr(width, "width")? = f.0.width;
        *out_ptr(data, "data")? = f.0.data.as_ptr();
        Ok(())
    })
}

/// # Safety
/// `f` must come from `sd_features` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_features_free(f: *mut SdFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Windowed matching scores. Empty arrays stand for the no-splice symbol.
///
/// # Safety
/// `truth` and `pred` must hold the given number of doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_window_score(
    truth: *const f64,
    n_truth: usize,
    pred: *const f64,
    n_pred: usize,
    w: f64,
    out: *mut SdWindowScore,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = slice_arg(truth, n_truth, "truth")?;
        let p = slice_arg(pred, n_pred, "pred")?;
        if w.is_nan() || w < 0.0 || t.iter().chain(p).any(|x| !x.is_finite()) {
            return Err(Fail::Invalid("window and positions must be finite, w >= 0".into()));
        }
        *out = SdWindowScore {
            matched: match_points(t, p, w).len(),
            jaccard: jaccard(t, p, w),
            recall: recall(t, p, w),
        };
        Ok(())
    })
}

/// Generates `count` samples of a scenario (preset name or TOML path) from
/// a pool directory into `out_dir`. `written` receives the number of
/// records in the manifest.
///
/// # Safety
/// String arguments must be NUL-terminated; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn sd_generate(
    scenario: *const c_char,
    pool_dir: *const c_char,
    split: *const c_char,
    count: usize,
    seed: u64,
    out_dir: *const c_char,
    written: *mut usize,
) -> SdStatus {
    guard(|| {
        let scenario = ScenarioConfig::resolve(str_arg(scenario, "scenario")?)?;
        let split = Split::parse(str_arg(split, "split")?)?;
        let assets = Assets::load_dir(str_arg(pool_dir, "pool_dir")?, split)?;
        let rep = generate_dataset(&assets, &scenario, count, seed, str_arg(out_dir, "out_dir")?)?;
        if let Some(w) = written.as_mut() {
            *w = rep.written;
        }
        Ok(())
    })
}
