//! C ABI over the acwb engine.
//!
//! Every function returns an [`AcwbStatus`]; on failure the message is
//! available from [`acwb_last_error_message`] on the same thread. Models are
//! opaque [`AcwbHandle`] pointers released with [`acwb_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use acwb::data::{load_csv, load_csv_with_schema, parse_csv_with_schema, CsvOptions};
use acwb::error::ErrorClass;
use acwb::interpret::complexity_report;
use acwb::model_io::{load_model, save_model};
use acwb::{fit_acwb, AcwbConfig, Dataset, Error, FittedModel, Task};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcwbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    DataError = 3,
    FitError = 4,
    ConfigError = 5,
    IoError = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque fitted model.
pub struct AcwbHandle {
    model: FittedModel,
}

/// Stage-wise complexity summary of a model (the first class for multiclass).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcwbComplexity {
    pub rho_uni: f64,
    pub rho_pint: f64,
    pub rho_deep: f64,
    pub risk_initial: f64,
    pub risk_uni: f64,
    pub risk_pint: f64,
    pub risk_deep: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

struct Failure(AcwbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Data => AcwbStatus::DataError,
            ErrorClass::Fit => AcwbStatus::FitError,
            ErrorClass::Config => AcwbStatus::ConfigError,
            ErrorClass::Io => AcwbStatus::IoError,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AcwbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AcwbStatus::Ok
        }
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
            set_error(format!("internal panic: {msg}"));
            AcwbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AcwbStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AcwbStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn handle_arg<'a>(h: *const AcwbHandle) -> Result<&'a AcwbHandle, Failure> {
    h.as_ref()
        .ok_or_else(|| Failure(AcwbStatus::NullArgument, "model handle is null".into()))
}

fn null_out(name: &str) -> Failure {
    Failure(AcwbStatus::NullArgument, format!("`{name}` is null"))
}

fn boxed(model: FittedModel) -> *mut AcwbHandle {
    Box::into_raw(Box::new(AcwbHandle { model }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn acwb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn acwb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Fit a model on a CSV file.
///
/// `task` may be null or `auto` (inferred from the target), `regression`,
/// `binary` or `multiclass`. `config` may be null or `key = value` lines in the
/// configuration file format.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_train_csv(
    path: *const c_char,
    target: *const c_char,
    task: *const c_char,
    config: *const c_char,
    out: *mut *mut AcwbHandle,
) -> AcwbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let target = str_arg(target, "target")?;
        let task = if task.is_null() {
            None
        } else {
            let name = str_arg(task, "task")?;
            Task::parse(name).ok_or_else(|| Failure(AcwbStatus::ConfigError, format!("unknown task `{name}`")))?
        };
        let mut cfg = AcwbConfig::default();
        if !config.is_null() {
            cfg.apply_text(str_arg(config, "config")?)?;
        }
        cfg.validate()?;
        let ds = load_csv(Path::new(path), target, task, &CsvOptions::default())?;
        *out = boxed(fit_acwb(&ds, &cfg)?);
        Ok(())
    })
}

/// # Safety
/// `path` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_load(path: *const c_char, out: *mut *mut AcwbHandle) -> AcwbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        *out = boxed(load_model(Path::new(path))?);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_save(model: *const AcwbHandle, path: *const c_char) -> AcwbStatus {
    guard(|| {
        let h = handle_arg(model)?;
        let path = str_arg(path, "path")?;
        save_model(&h.model, Path::new(path))?;
        Ok(())
    })
}

unsafe fn write_predictions(
    model: &FittedModel,
    ds: &Dataset,
    scores: *mut f64,
    probabilities: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> Result<(), Failure> {
    if out_len.is_null() {
        return Err(null_out("out_len"));
    }
    let n = ds.n_rows();
    *out_len = n;
    if n > capacity {
        return Err(Failure(
            AcwbStatus::BufferTooSmall,
            format!("{n} rows need a buffer of {n}, got {capacity}"),
        ));
    }
    if n > 0 && scores.is_null() {
        return Err(null_out("scores"));
    }
    let p = model.predict(ds)?;
    if n > 0 {
        std::slice::from_raw_parts_mut(scores, n).copy_from_slice(&p.score);
        if !probabilities.is_null() {
            let dst = std::slice::from_raw_parts_mut(probabilities, n);
            match &p.probability {
                Some(prob) => dst.copy_from_slice(prob),
                None => dst.fill(f64::NAN),
            }
        }
    }
    Ok(())
}

/// Predict every row of a CSV file.
///
/// Writes the additive score to `scores` and, when `probabilities` is not
/// null, the class probability (NaN for regression). Both buffers hold
/// `capacity` doubles. `out_len` always receives the row count; if it exceeds
/// `capacity` the call returns `BufferTooSmall` and writes nothing else.
///
/// # Safety
/// Buffers must hold `capacity` doubles; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_predict_csv(
    model: *const AcwbHandle,
    path: *const c_char,
    scores: *mut f64,
    probabilities: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> AcwbStatus {
    guard(|| {
        let h = handle_arg(model)?;
        let path = str_arg(path, "path")?;
        let schema = &h.model.primary().recipe.source_schema;
        let ds = load_csv_with_schema(Path::new(path), schema, &CsvOptions::default())?;
        write_predictions(&h.model, &ds, scores, probabilities, capacity, out_len)
    })
}

/// Same as [`acwb_model_predict_csv`] with CSV text held in memory.
///
/// # Safety
/// See [`acwb_model_predict_csv`]; `csv` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_predict_csv_buffer(
    model: *const AcwbHandle,
    csv: *const c_char,
    scores: *mut f64,
    probabilities: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> AcwbStatus {
    guard(|| {
        let h = handle_arg(model)?;
        let text = str_arg(csv, "csv")?;
        let schema = &h.model.primary().recipe.source_schema;
        let ds = parse_csv_with_schema(text, schema, &CsvOptions::default())?;
        write_predictions(&h.model, &ds, scores, probabilities, capacity, out_len)
    })
}

/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_complexity(model: *const AcwbHandle, out: *mut AcwbComplexity) -> AcwbStatus {
    guard(|| {
        let h = handle_arg(model)?;
        let out = out.as_mut().ok_or_else(|| null_out("out"))?;
        let m = h.model.primary();
        let r = complexity_report(m);
        let c = m.checkpoints;
        *out = AcwbComplexity {
            rho_uni: r.rho_uni,
            rho_pint: r.rho_pint,
            rho_deep: r.rho_deep,
            risk_initial: c.r0,
            risk_uni: c.r_uni,
            risk_pint: c.r_pint,
            risk_deep: c.r_deep,
        };
        Ok(())
    })
}

/// Release a model. Null is accepted and ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not already freed.
#[no_mangle]
pub unsafe extern "C" fn acwb_model_free(model: *mut AcwbHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
