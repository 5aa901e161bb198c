//! C ABI over the `ctts` crate.
//!
//! Every function returns a [`CttsStatus`]; on failure the message is
//! available from [`ctts_last_error`] on the same thread. Models are opaque
//! handles created by [`ctts_model_load`] and released with
//! [`ctts_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ctts::baselines::{arima_fit_or_last, arima_predict, ema_fit, ema_predict, ArimaOrder, ClassProbPrediction};
use ctts::data::{label_sign, minmax_scale, rolling_volatility};
use ctts::model::{forward_inputs, select_kernel, Checkpoint};
use ctts::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CttsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Numerical = 5,
    DegenerateWindow = 6,
    Panic = 7,
}

/// Baselines available through [`ctts_baseline_predict`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CttsBaseline {
    Arima = 0,
    Ema = 1,
}

/// Class probabilities in `Down, Flat, Up` order and the predicted sign.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CttsPrediction {
    pub probs: [f64; 3],
    /// -1, 0 or 1.
    pub predicted_sign: i8,
    pub confidence: f64,
}

/// Opaque trained model.
pub struct CttsModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CttsStatus {
    match err {
        Error::Io { .. } => CttsStatus::Io,
        Error::Checkpoint(_) | Error::Parse { .. } => CttsStatus::Checkpoint,
        Error::DegenerateWindow(_) => CttsStatus::DegenerateWindow,
        e if e.is_numerical() => CttsStatus::Numerical,
        _ => CttsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CttsStatus, String)>) -> CttsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CttsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CttsStatus::Panic
        }
    }
}

fn lift<T>(r: ctts::Result<T>) -> Result<T, (CttsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (CttsStatus, String) {
    (CttsStatus::NullPointer, format!("{name} is null"))
}

unsafe fn read_prices<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], (CttsStatus, String)> {
    if ptr.is_null() {
        return Err(null("prices"));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

fn to_c(p: &ClassProbPrediction) -> CttsPrediction {
    CttsPrediction {
        probs: p.probs,
        predicted_sign: p.predicted_class.sign(),
        confidence: p.confidence,
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ctts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file into a new handle written to `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctts_model_load(path: *const c_char, out: *mut *mut CttsModel) -> CttsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (CttsStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let checkpoint = lift(Checkpoint::load(path))?;
        *out = Box::into_raw(Box::new(CttsModel { checkpoint }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`ctts_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ctts_model_free(model: *mut CttsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of raw prices [`ctts_model_predict`] expects, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctts_model_window_len(model: *const CttsModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.config.seq_len)
}

/// Classifies the move after `len` raw prices. The window is min-max scaled
/// and its log-return volatility picks the kernel.
///
/// # Safety
/// `model` must be a live handle, `prices` must point to `len` doubles and
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctts_model_predict(
    model: *const CttsModel,
    prices: *const f64,
    len: usize,
    out: *mut CttsPrediction,
) -> CttsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let raw = read_prices(prices, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (inputs, _, _) = lift(minmax_scale(raw))?;
        let sigma = lift(rolling_volatility(raw))?;
        let ck = &model.checkpoint;
        let trace = lift(forward_inputs(&inputs, sigma, &ck.params, &ck.config))?;
        let probs = [trace.probs[0], trace.probs[1], trace.probs[2]];
        *out = to_c(&ClassProbPrediction::from_probs(probs));
        Ok(())
    })
}

/// Fits a baseline to the window and classifies the next move. ARIMA uses
/// orders `(p, d, q)`; EMA ignores them.
///
/// # Safety
/// `prices` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctts_baseline_predict(
    kind: CttsBaseline,
    prices: *const f64,
    len: usize,
    p: usize,
    d: usize,
    q: usize,
    neutral_band: f64,
    out: *mut CttsPrediction,
) -> CttsStatus {
    guard(|| {
        let raw = read_prices(prices, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pred = match kind {
            CttsBaseline::Arima => {
                let m = lift(arima_fit_or_last(raw, ArimaOrder { p, d, q }))?;
                lift(arima_predict(&m, raw, neutral_band))?
            }
            CttsBaseline::Ema => {
                let m = lift(ema_fit(raw))?;
                lift(ema_predict(&m, raw, neutral_band))?
            }
        };
        *out = to_c(&pred);
        Ok(())
    })
}

/// Sign of the move from `p_last` to `p_next` with a relative flat band.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctts_label_sign(p_next: f64, p_last: f64, neutral_band: f64, out: *mut i8) -> CttsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(p_last > 0.0 && p_next.is_finite() && neutral_band >= 0.0) {
            return Err((
                CttsStatus::InvalidArgument,
                format!("label needs p_last > 0 and band >= 0, got {p_last} / {neutral_band}"),
            ));
        }
        *out = label_sign(p_next, p_last, neutral_band).sign();
        Ok(())
    })
}

/// Volatility-driven kernel size.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctts_select_kernel(
    sigma_t: f64,
    sigma_max: f64,
    k_min: usize,
    k_max: usize,
    out: *mut usize,
) -> CttsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let k = lift(select_kernel(sigma_t, sigma_max, k_min, k_max))?;
        *out = k;
        Ok(())
    })
}
